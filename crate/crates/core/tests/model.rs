use fgmae::features::{compute_targets, FeatureSpec};
use fgmae::model::{FgMae, MaskPlan, ModelConfig};
use fgmae::numerics::grad_check_many;
use fgmae::{SeedRng, Tensor};

fn tiny_setup(seed: u64) -> (FgMae<f64>, Tensor<f64>, MaskPlan) {
    let spec = FeatureSpec::hog();
    let widths = spec.head_widths(2, 8).unwrap();
    let model = FgMae::<f64>::new(ModelConfig::tiny(32, 8, 2, widths), &SeedRng::new(seed)).unwrap();
    let mut rng = SeedRng::new(seed + 1);
    let image = Tensor::from_fn([2, 2, 32, 32], |_| rng.uniform());
    let plan = MaskPlan::random(2, 16, 0.75, &mut rng).unwrap();
    (model, image, plan)
}

#[test]
fn loss_gradient_matches_finite_differences_for_selected_params() {
    let (model, image, plan) = tiny_setup(10);
    let targets = compute_targets(&image, &FeatureSpec::hog(), 8).unwrap();
    let names = ["enc.blocks.0.attn.qkv.b", "dec.mask_token", "enc.norm.g", "head.0.b"];
    let inputs: Vec<Tensor<f64>> = names.iter().map(|n| model.params.get(n).unwrap().clone()).collect();
    let err = grad_check_many(
        |tape, vars| {
            let mut pairs: Vec<(String, fgmae::Var)> = Vec::new();
            for (name, t) in model.params.iter() {
                match names.iter().position(|n| n == name) {
                    Some(i) => pairs.push((name.clone(), vars[i])),
                    None => pairs.push((name.clone(), tape.constant(t.clone()))),
                }
            }
            let bound = fgmae::model::Bound::from_pairs(pairs);
            model.loss(tape, &bound, &image, &targets, &plan)
        },
        &inputs,
        1e-5,
    )
    .unwrap();
    assert!(err < 1e-4, "relative error {err}");
}

#[test]
fn visible_target_changes_leave_loss_unchanged() {
    let (model, image, plan) = tiny_setup(20);
    let targets = compute_targets(&image, &FeatureSpec::hog(), 8).unwrap();
    let loss_of = |t: &fgmae::features::TargetSet| {
        let mut tape = fgmae::Tape::new();
        let bound = model.bind(&mut tape, |_| false);
        let l = model.loss(&mut tape, &bound, &image, t, &plan).unwrap();
        tape.value(l).item()
    };
    let base = loss_of(&targets);
    let mut perturbed = targets.clone();
    let k = perturbed.heads[0].width();
    let data = perturbed.heads[0].values.data_mut();
    for (bi, keep) in plan.ids_keep.iter().enumerate() {
        for &id in keep {
            for v in &mut data[(bi * 16 + id) * k..(bi * 16 + id + 1) * k] {
                *v += 123.0;
            }
        }
    }
    assert_eq!(loss_of(&perturbed).to_bits(), base.to_bits());
}

#[test]
fn dual_heads_are_independent() {
    let spec = FeatureSpec::hog_plus_ndi();
    let widths = spec.head_widths(13, 8).unwrap();
    let mut model = FgMae::<f32>::new(ModelConfig::tiny(16, 8, 13, widths), &SeedRng::new(3)).unwrap();
    let mut rng = SeedRng::new(4);
    let image = Tensor::from_fn([1, 13, 16, 16], |_| rng.uniform() as f32);
    let plan = MaskPlan::random(1, 4, 0.5, &mut rng).unwrap();
    let run = |m: &FgMae<f32>| {
        let mut tape = fgmae::Tape::new();
        let bound = m.bind(&mut tape, |_| false);
        let preds = m.forward(&mut tape, &bound, &image, &plan).unwrap();
        (tape.value(preds[0]).clone(), tape.value(preds[1]).clone())
    };
    let (_, ndi_before) = run(&model);
    let w = model.params.get_mut("head.0.w").unwrap();
    w.data_mut().iter_mut().for_each(|v| *v += 0.5);
    let (_, ndi_after) = run(&model);
    assert_eq!(ndi_before, ndi_after);

    model.zero_heads();
    let (hog, ndi) = run(&model);
    assert!(hog.data().iter().chain(ndi.data()).all(|&v| v == 0.0));
}
