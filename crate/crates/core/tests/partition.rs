mod common;

use std::collections::BTreeSet;

use common::{axial_model, line_model, seeded};
use proptest::prelude::*;
use smle_core::{
    canonical_partition, validate_partition, ArmaSpec, DiagonalVarmaModel, InnovationModel, MeanModel, ParamId,
    ParameterPartition, PartitionError,
};

fn dense_model(s: usize, p: usize, mean: MeanModel) -> DiagonalVarmaModel {
    let r: Vec<Vec<f64>> = (0..s)
        .map(|i| (0..s).map(|j| if i == j { 1.0 } else { 0.3f64.powi(i.abs_diff(j) as i32) }).collect())
        .collect();
    DiagonalVarmaModel {
        sites: (0..s).map(|i| vec![i as f64]).collect(),
        arma: vec![ArmaSpec::new(0.0, 0.0, 1.0, vec![0.3; p.min(1)], vec![0.2]); s],
        innovation: InnovationModel::DenseCorrelation { r },
        mean_model: mean,
    }
}

fn model_strategy() -> impl Strategy<Value = DiagonalVarmaModel> {
    let mean = prop::sample::select(vec![MeanModel::Fixed, MeanModel::Constant, MeanModel::Trend]);
    prop_oneof![
        (1usize..=30, mean.clone()).prop_map(|(s, m)| DiagonalVarmaModel { mean_model: m, ..line_model(s) }),
        (1usize..=6, 0usize..=1, mean.clone()).prop_map(|(s, p, m)| dense_model(s, p, m)),
        (4usize..=16, 1usize..=6, mean).prop_map(|(n, m, mm)| DiagonalVarmaModel {
            mean_model: mm,
            ..axial_model(n, m, 0.5, 1.0, 0.8, 0.4)
        }),
    ]
}

fn primary_union(part: &ParameterPartition) -> BTreeSet<ParamId> {
    part.steps.iter().flat_map(|s| s.primary.iter().copied()).collect()
}

proptest! {
    #![proptest_config(seeded(64, 0x9A27))]

    #[test]
    fn canonical_partitions_are_valid(model in model_strategy()) {
        let part = canonical_partition(&model);
        let schedule = validate_partition(&part, &model).unwrap();

        let all: BTreeSet<ParamId> = model.parameters().into_iter().collect();
        prop_assert_eq!(primary_union(&part), all);
        let total: usize = part.steps.iter().map(|s| s.primary.len()).sum();
        prop_assert_eq!(total, model.parameters().len(), "primary sets overlap");

        // Every nuisance parameter is estimated in a strictly earlier stage.
        for (k, step) in part.steps.iter().enumerate() {
            let stage = schedule.stage_of(k).unwrap();
            for eta in &step.nuisance {
                let owner = part.steps.iter().position(|s| s.primary.contains(eta)).unwrap();
                prop_assert!(schedule.stage_of(owner).unwrap() < stage);
            }
        }
    }
}

#[test]
fn line_design_has_twenty_one_steps_in_two_stages() {
    let model = line_model(20);
    let part = canonical_partition(&model);
    let schedule = validate_partition(&part, &model).unwrap();
    assert_eq!(part.steps.len(), 21);
    assert_eq!(schedule.stages.len(), 2);
    assert_eq!(part.steps[20].primary.len(), 2);
    assert_eq!(model.parameters().len(), 3 * 20 + 2);
}

#[test]
fn axial_grid_has_three_stages() {
    let model = axial_model(12, 4, 0.5, 1.0, 0.8, 0.4);
    let part = canonical_partition(&model);
    let schedule = validate_partition(&part, &model).unwrap();
    assert_eq!(part.steps.len(), 48 + 4 + 1);
    assert_eq!(schedule.stages.len(), 3);
    assert_eq!(schedule.stages[1].len(), 4);
}

#[test]
fn single_white_noise_site_is_one_step() {
    let model = DiagonalVarmaModel {
        sites: vec![vec![0.0]],
        arma: vec![ArmaSpec::white_noise(0.0, 1.0)],
        innovation: InnovationModel::DenseCorrelation { r: vec![vec![1.0]] },
        mean_model: MeanModel::Constant,
    };
    let part = canonical_partition(&model);
    assert_eq!(part.steps.len(), 1);
    assert_eq!(validate_partition(&part, &model).unwrap().stages.len(), 1);
}

fn mutate(model: &DiagonalVarmaModel, f: impl FnOnce(&mut ParameterPartition)) -> PartitionError {
    let mut part = canonical_partition(model);
    f(&mut part);
    validate_partition(&part, model).unwrap_err()
}

#[test]
fn varma_mutations_are_rejected() {
    let model = line_model(5);
    let last = 5;

    let e = mutate(&model, |p| {
        p.steps[last].primary.insert(ParamId::Scale(2));
    });
    assert!(matches!(e, PartitionError::Overlap { param: ParamId::Scale(2), .. }), "{e}");

    let e = mutate(&model, |p| {
        p.steps[1].primary.remove(&ParamId::Ar(1, 2));
    });
    assert!(matches!(e, PartitionError::Coverage { ref missing } if missing == &[ParamId::Ar(1, 2)]), "{e}");

    let e = mutate(&model, |p| {
        p.steps[0].nuisance.insert(ParamId::MaternAlpha);
    });
    assert!(matches!(e, PartitionError::NuisanceOrder { step: 0, param: ParamId::MaternAlpha }), "{e}");
}

#[test]
fn axial_mutations_are_rejected() {
    let model = axial_model(8, 3, 0.5, 1.0, 0.8, 0.4);
    let coh = 8 * 3 + 3;

    let e = mutate(&model, |p| {
        p.steps[coh].primary.insert(ParamId::SpectralAlpha(1));
    });
    assert!(matches!(e, PartitionError::Overlap { param: ParamId::SpectralAlpha(1), .. }), "{e}");

    let e = mutate(&model, |p| {
        p.steps[coh].primary.remove(&ParamId::CoherenceTau);
    });
    assert!(matches!(e, PartitionError::Coverage { .. }), "{e}");

    let e = mutate(&model, |p| {
        p.steps[24].nuisance.insert(ParamId::CoherenceXi);
    });
    assert!(matches!(e, PartitionError::NuisanceOrder { step: 24, param: ParamId::CoherenceXi }), "{e}");
}

#[test]
fn parallel_condition_is_enforced() {
    let model = axial_model(8, 3, 0.5, 1.0, 0.8, 0.4);
    let e = mutate(&model, |p| {
        let last = p.steps.len() - 1;
        p.steps[last].stage = 1;
    });
    assert!(matches!(e, PartitionError::Stage { .. }), "{e}");
}
