use super::{GenContext, GenError, GenSpec, Generated, SurrogateGenerator};
use crate::dataset::{Dataset, Record, Role};
use crate::rng::{self, sample_weighted};

/// Per-column sampling distributions: empirical frequencies rounded to two
/// decimals (half away from zero) and renormalized. Codes whose rounded mass is
/// zero become unsampleable. If a whole column rounds to zero mass the raw
/// frequencies are used instead.
pub fn univariate_distributions(private: &Dataset) -> Result<Vec<Vec<f64>>, GenError> {
    if private.is_empty() {
        return Err(GenError::InvalidSpec("univariate baseline needs a non-empty dataset".into()));
    }
    let n = private.len() as f64;
    Ok(private
        .schema
        .variables
        .iter()
        .enumerate()
        .map(|(v, spec)| {
            let mut counts = vec![0usize; spec.cardinality()];
            for c in private.column(v) {
                counts[c as usize] += 1;
            }
            let freqs: Vec<f64> = counts.iter().map(|&c| c as f64 / n).collect();
            let rounded: Vec<f64> = freqs.iter().map(|f| (f * 100.0).round() / 100.0).collect();
            let total: f64 = rounded.iter().sum();
            if total > 0.0 {
                rounded.iter().map(|r| r / total).collect()
            } else {
                freqs
            }
        })
        .collect())
}

pub fn gen_univariate(private: &Dataset, spec: &GenSpec) -> Result<Dataset, GenError> {
    let dists = univariate_distributions(private)?;
    let mut rng = rng::seeded(spec.seed);
    let records = (0..spec.target_m)
        .map(|_| Record::new(dists.iter().map(|p| sample_weighted(&mut rng, p) as u32).collect()))
        .collect();
    Ok(Dataset::new(private.schema.clone(), records, Role::Surrogate))
}

pub struct UnivariateGenerator;

impl SurrogateGenerator for UnivariateGenerator {
    fn name(&self) -> &str {
        "univariate"
    }

    fn generate(&self, ctx: &GenContext<'_>, spec: &GenSpec) -> Result<Generated, GenError> {
        let private = ctx.private.ok_or(GenError::MissingInput {
            generator: self.name().into(),
            what: "the private dataset",
        })?;
        gen_univariate(private, spec).map(Generated::plain)
    }
}
