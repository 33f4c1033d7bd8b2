use proptest::prelude::*;
use qnn::graph::model::random_weighted;
use qnn::graph::{
    cifar10, load_model, read_image, run, run_batch, run_reference, save_model, write_image, Execution, Im2col,
    LayerKind, LutSpec, Model, ModelBuilder, Runner,
};
use qnn::kernels::lut::{LutFunc, LutMode};
use qnn::{Error, QTensor, Shape};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Up to four random layers on an input of at most 12x12x8.
fn small_model(seed: u64) -> Model {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = Shape::new(rng.gen_range(1..=12), rng.gen_range(1..=12), rng.gen_range(1..=8));
    let mut b = ModelBuilder::new(shape, 7);
    let n_layers = rng.gen_range(1..=4);
    let mut added = 0;
    let mut attempts = 0;
    while added < n_layers && attempts < 50 {
        attempts += 1;
        let head = b.clone().build().output_shape();
        let c = head.channels;
        let fan = |k: usize, c_in: usize| k * k * c_in;
        let next = match rng.gen_range(0..8) {
            0 => {
                let (k, s, p) = ([1, 3, 5][rng.gen_range(0..3)], rng.gen_range(1..=2), rng.gen_range(0..=2));
                let c_out = rng.gen_range(1..=8);
                let w = random_weighted(&mut rng, c_out * fan(k, c), c_out, fan(k, c), 40.0);
                b.clone().conv("conv", k, s, p, w)
            }
            1 => {
                let (k, s, p) = ([1, 3][rng.gen_range(0..2)], rng.gen_range(1..=2), rng.gen_range(0..=1));
                let w = random_weighted(&mut rng, fan(k, c), c, k * k, 40.0);
                b.clone().depthwise_conv("dw", k, s, p, w)
            }
            2 => b.clone().maxpool("max", rng.gen_range(1..=3), rng.gen_range(1..=3), rng.gen_range(0..=1)),
            3 => b.clone().avgpool("avg", rng.gen_range(1..=3), rng.gen_range(1..=3), rng.gen_range(0..=1)),
            4 => b.clone().relu("relu"),
            5 | 6 => {
                let func = if rng.gen() { LutFunc::Sigmoid } else { LutFunc::Tanh };
                let lut = LutSpec {
                    mode: if rng.gen() { LutMode::Unified } else { LutMode::TwoRegion },
                    range_pow: rng.gen_range(2..=3),
                    entries: 1 << rng.gen_range(4..=9),
                    entry_bits: if rng.gen() { 8 } else { 16 },
                    interpolate: rng.gen(),
                };
                b.clone().activation("act", func, lut)
            }
            _ => {
                let rows = rng.gen_range(1..=12);
                let cols = head.len();
                let w = random_weighted(&mut rng, rows * cols, rows, cols, 40.0);
                b.clone().fully_connected("fc", w, rng.gen())
            }
        };
        if let Ok(nb) = next {
            b = nb;
            added += 1;
        }
    }
    b.build()
}

fn random_input(model: &Model, seed: u64) -> QTensor<i8> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = model.input_shape;
    QTensor::new(s, model.input_frac, (0..s.len()).map(|_| rng.gen()).collect()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn small_models_match_oracle(seed in any::<u64>(), input_seed in any::<u64>()) {
        let model = small_model(seed);
        model.validate().unwrap();
        let x = random_input(&model, input_seed);
        let want = run_reference(&model, &x).unwrap().output;
        prop_assert_eq!(&run(&model, &x).unwrap().output, &want);
        let full = Runner::new(&model, Im2col::Full, Execution::Parallel).unwrap().run(&x).unwrap();
        prop_assert_eq!(&full.output, &want);
    }
}

#[test]
fn small_model_generator_covers_every_kind() {
    let mut seen = std::collections::HashSet::new();
    for seed in 0..300 {
        seen.extend(small_model(seed).layers.iter().map(|l| l.kind));
    }
    for k in LayerKind::ALL {
        assert!(seen.contains(&k), "{k:?} never generated");
    }
}

#[test]
fn model_and_image_roundtrip_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let model = cifar10(17, true).unwrap();
    save_model(&model, dir.path().join("m")).unwrap();
    let loaded = load_model(dir.path().join("m")).unwrap();
    assert_eq!(loaded, model);
    assert_eq!(load_model(dir.path().join("m/model.json")).unwrap(), model);

    let x = random_input(&model, 5);
    write_image(&x, dir.path().join("x.bin")).unwrap();
    let y = read_image(dir.path().join("x.bin")).unwrap();
    assert_eq!(y, x);
    assert_eq!(run(&loaded, &y).unwrap().output, run(&model, &x).unwrap().output);
}

#[test]
fn truncated_weights_file() {
    let dir = tempfile::tempdir().unwrap();
    save_model(&cifar10(1, false).unwrap(), dir.path()).unwrap();
    let w = dir.path().join("weights.bin");
    let bytes = std::fs::read(&w).unwrap();
    std::fs::write(&w, &bytes[..bytes.len() / 2]).unwrap();
    assert!(matches!(load_model(dir.path()), Err(Error::BlobSize { .. })));
    assert!(matches!(load_model(dir.path().join("missing")), Err(Error::Io(_))));
}

#[test]
fn cifar10_batch_agrees_with_oracle() {
    let model = cifar10(99, true).unwrap();
    let xs: Vec<_> = (0..8).map(|s| random_input(&model, s)).collect();
    let batch = run_batch(&model, &xs, Execution::Parallel).unwrap();
    for (x, out) in xs.iter().zip(&batch) {
        let oracle = run_reference(&model, x).unwrap();
        assert_eq!(out.output, oracle.output);
        assert_eq!(out.argmax(), oracle.argmax());
    }
}
