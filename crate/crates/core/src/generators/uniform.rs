use super::{GenContext, GenError, GenSpec, Generated, SurrogateGenerator};
use crate::dataset::{Dataset, Record, Role};
use crate::rng;
use crate::schema::Schema;
use rand::Rng;
use std::sync::Arc;

/// Every cell drawn independently and uniformly over its variable's values.
pub fn gen_uniform(schema: &Arc<Schema>, spec: &GenSpec) -> Dataset {
    let mut rng = rng::seeded(spec.seed);
    let cards = schema.cardinalities();
    let records = (0..spec.target_m)
        .map(|_| Record::new(cards.iter().map(|&k| rng.random_range(0..k as u32)).collect()))
        .collect();
    Dataset::new(schema.clone(), records, Role::Surrogate)
}

pub struct UniformGenerator;

impl SurrogateGenerator for UniformGenerator {
    fn name(&self) -> &str {
        "uniform"
    }

    fn generate(&self, ctx: &GenContext<'_>, spec: &GenSpec) -> Result<Generated, GenError> {
        Ok(Generated::plain(gen_uniform(ctx.schema, spec)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::tests::binary_schema;
    use crate::schema::VariableSpec;

    #[test]
    fn binary_frequencies_near_half() {
        let s = binary_schema(1);
        let d = gen_uniform(&s, &GenSpec::new(100_000, 42).unwrap());
        let ones = d.column(0).filter(|&c| c == 1).count() as f64 / 1e5;
        assert!((ones - 0.5).abs() < 0.01, "{ones}");
    }

    #[test]
    fn single_cell_domain_and_determinism() {
        let s = Arc::new(Schema::new(vec![VariableSpec::new("A", &["x"])], "").unwrap());
        let d = gen_uniform(&s, &GenSpec::new(20, 1).unwrap());
        assert!(d.records.iter().all(|r| r.cells == vec![0]));
        let s = binary_schema(4);
        let spec = GenSpec::new(100, 9).unwrap();
        assert_eq!(gen_uniform(&s, &spec).records, gen_uniform(&s, &spec).records);
    }
}
