use super::{Artifact, GenContext, GenError, GenSpec, Generated, SurrogateGenerator};
use crate::bayesnet::{config_count, BayesNet};
use crate::dataset::Role;
use crate::rng::{self, Rng as SeededRng};
use crate::schema::Schema;
use rand::seq::{index, SliceRandom};
use rand::Rng;
use rand_distr::{Distribution, Gamma};
use std::sync::Arc;

pub const DEFAULT_MAX_PARENTS: usize = 5;
pub const DEFAULT_ALPHA: f64 = 1.0;

fn dirichlet(rng: &mut SeededRng, k: usize, alpha: f64) -> Vec<f64> {
    let gamma = Gamma::new(alpha, 1.0).expect("alpha > 0");
    loop {
        let draws: Vec<f64> = (0..k).map(|_| gamma.sample(rng)).collect();
        let total: f64 = draws.iter().sum();
        if total > 0.0 && total.is_finite() {
            return draws.into_iter().map(|g| g / total).collect();
        }
    }
}

/// Random Bayesian network over the schema alone: random node order, parent
/// sets drawn from earlier nodes (size uniform in `0..=min(max_parents, i)`,
/// then a uniform subset of that size), every CPT row `Dirichlet(alpha)`.
pub fn build_random_bn(schema: &Arc<Schema>, max_parents: usize, alpha: f64, seed: u64) -> BayesNet {
    assert!(alpha > 0.0, "Dirichlet concentration must be positive");
    let mut rng = rng::seeded(seed);
    let d = schema.len();
    let mut order: Vec<usize> = (0..d).collect();
    order.shuffle(&mut rng);
    let mut parents = vec![Vec::new(); d];
    let mut cpts = vec![Vec::new(); d];
    for (i, &v) in order.iter().enumerate() {
        let cap = max_parents.min(i);
        let size = rng.random_range(0..=cap);
        let mut picked: Vec<usize> = index::sample(&mut rng, i, size).into_iter().collect();
        picked.sort_unstable();
        parents[v] = picked.into_iter().map(|pos| order[pos]).collect();
        let k = schema.variables[v].cardinality();
        cpts[v] = (0..config_count(schema, &parents[v])).map(|_| dirichlet(&mut rng, k, alpha)).collect();
    }
    BayesNet { schema: schema.clone(), order, parents, cpts }
}

#[derive(Debug, Clone)]
pub struct ArbitraryGenerator {
    pub max_parents: usize,
    pub alpha: f64,
}

impl Default for ArbitraryGenerator {
    fn default() -> Self {
        Self { max_parents: DEFAULT_MAX_PARENTS, alpha: DEFAULT_ALPHA }
    }
}

impl SurrogateGenerator for ArbitraryGenerator {
    fn name(&self) -> &str {
        "arbitrary"
    }

    fn generate(&self, ctx: &GenContext<'_>, spec: &GenSpec) -> Result<Generated, GenError> {
        if self.alpha <= 0.0 {
            return Err(GenError::InvalidSpec("alpha must be positive".into()));
        }
        let bn = build_random_bn(ctx.schema, self.max_parents, self.alpha, rng::derive_str(spec.seed, "structure"));
        let dataset = bn.sample(spec.target_m, rng::derive_str(spec.seed, "sample"), Role::Surrogate);
        let audit = serde_json::to_string_pretty(&bn.to_doc()).map_err(|e| GenError::Failed(e.to_string()))?;
        Ok(Generated { dataset, artifacts: vec![Artifact { name: "bayesnet.json".into(), content: audit }] })
    }
}
