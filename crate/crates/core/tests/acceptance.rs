//! Acceptance checks. Prints one PASS/FAIL line per check and exits non-zero
//! if any fails.

use std::process::ExitCode;
use std::time::Instant;

use qnn::graph::{cifar10, count_ops, plan_memory, run_reference, Im2col, Runner, Execution, LayerKind};
use qnn::kernels::conv::{conv_hwc_q7, ConvParams};
use qnn::kernels::depthwise::depthwise_conv_hwc_q7;
use qnn::kernels::fc::{fully_connected_mixed, fully_connected_q7_basic, fully_connected_q7_opt, weight_reorder_1x4};
use qnn::kernels::lut::{
    activation_lut_apply_q15, activation_lut_apply_q7, build_lut, sweep_max_error, LutFunc, LutMode, SweepInput,
};
use qnn::kernels::pool::{avgpool_insitu, maxpool_insitu, PoolGeometry};
use qnn::kernels::relu::relu_swar_q7;
use qnn::quant::{q7_to_q15_noreorder_vec, q7_to_q15_ordered_vec, weight_byteswap_preprocess, weight_byteswap_rows, Width};
use qnn::reference::{
    ref_conv, ref_depthwise_conv, ref_fc, ref_fc_mixed, ref_lut_apply_q15, ref_lut_apply_q7, ref_pool_window, ref_relu,
    PoolKind,
};
use qnn::{par, QTensor, QuantParams, Shape};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;
type CheckFn = fn() -> Check;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

const CASES: usize = 1000;

fn rand_quant(rng: &mut impl Rng) -> QuantParams {
    QuantParams::new(rng.gen_range(0..=8), rng.gen_range(0..=8)).unwrap()
}

/// Values in `[-m, m]` with a per-case magnitude so both saturated and
/// unsaturated outputs show up.
fn rand_q7(rng: &mut impl Rng, n: usize) -> Vec<i8> {
    let m: i16 = rng.gen_range(1..=128);
    (0..n).map(|_| rng.gen_range(-m..=m.min(127)) as i8).collect()
}

fn rand_tensor(rng: &mut impl Rng, shape: Shape) -> QTensor<i8> {
    QTensor::new(shape, 7, rand_q7(rng, shape.len())).unwrap()
}

fn rand_shape(rng: &mut impl Rng) -> Shape {
    Shape::new(rng.gen_range(1..=16), rng.gen_range(1..=16), rng.gen_range(1..=16))
}

/// A conv geometry whose window fits the input.
fn rand_conv(rng: &mut impl Rng, shape: Shape) -> Option<ConvParams> {
    let k = [1, 3, 5][rng.gen_range(0..3)];
    let p = ConvParams::new(k, rng.gen_range(1..=2), rng.gen_range(0..=2), rand_quant(rng));
    p.output_shape(shape, 1).ok().map(|_| p)
}

fn op_counts() -> Check {
    let m = cifar10(0, false).map_err(err)?;
    let ops = count_ops(&m);
    // figures as printed, with the number of decimals printed
    let printed = [(4.9e6, 1e5), (73.7e3, 1e2), (13.1e6, 1e5), (18.4e3, 1e2), (6.6e6, 1e5), (9.2e3, 1e2), (20e3, 1e3)];
    let expected = [4_915_200u64, 73_728, 13_107_200, 18_432, 6_553_600, 9_216, 20_480];
    ensure(ops.per_layer == expected, || format!("per-layer ops {:?}", ops.per_layer))?;
    for (got, (fig, unit)) in ops.per_layer.iter().zip(printed) {
        let rounded = (*got as f64 / unit).round() * unit;
        ensure((rounded - fig).abs() < 0.5, || format!("{got} does not round to {fig}"))?;
    }
    ensure(((ops.total as f64 / 1e5).round() * 1e5 - 24.7e6).abs() < 0.5, || format!("total {}", ops.total))?;
    Ok(format!("total {} (24.7 M), per layer {:?}", ops.total, ops.per_layer))
}

fn memory_sizes() -> Check {
    let m = cifar10(0, false).map_err(err)?;
    let filters = m.filter_bytes();
    let kib = filters as f64 / 1024.0;
    ensure((kib - 87.0).abs() / 87.0 <= 0.03, || format!("weights {filters} B = {kib:.2} KiB"))?;
    let plan = plan_memory(&m, Im2col::default()).map_err(err)?;
    let act_kib = plan.total_activation_bytes as f64 / 1024.0;
    ensure((act_kib - 55.0).abs() / 55.0 <= 0.03, || format!("activations {act_kib:.2} KiB"))?;
    let (pair, at) = plan.largest_pair;
    ensure(pair == 3072 + 32768 && at == 0, || format!("largest pair {pair} at layer {at}"))?;
    ensure(plan.activation_bytes() >= pair, || "buffers smaller than largest pair".into())?;
    Ok(format!(
        "weights {filters} B ({kib:.2} KiB), activations {} B ({act_kib:.2} KiB), largest pair {pair} B, buffers {:?}",
        plan.total_activation_bytes, plan.buffers
    ))
}

fn kernel_equivalence() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0xacce);
    let mut counts = [0usize; 10];

    // fully-connected: basic, opt, mixed
    for _ in 0..CASES {
        let (rows, cols) = (rng.gen_range(1..=16), rng.gen_range(1..=16));
        let x = rand_q7(&mut rng, cols);
        let w = rand_q7(&mut rng, rows * cols);
        let bias = rand_q7(&mut rng, rows);
        let q = rand_quant(&mut rng);
        let want = ref_fc(&x, &w, &bias, q).map_err(err)?;
        let mut buf = vec![0i16; cols];
        let mut out = vec![0i8; rows];
        fully_connected_q7_basic(&x, &w, &bias, q, &mut buf, &mut out).map_err(err)?;
        ensure(out == want, || format!("fc basic {rows}x{cols}"))?;
        let rw = weight_reorder_1x4(&w, rows, cols).map_err(err)?;
        fully_connected_q7_opt(&x, &rw, &bias, q, &mut buf, &mut out).map_err(err)?;
        ensure(out == want, || format!("fc opt {rows}x{cols}"))?;

        let x15: Vec<i16> = (0..cols).map(|_| rng.gen_range(-4096..=4096)).collect();
        let want = ref_fc_mixed(&x15, &w, &bias, q).map_err(err)?;
        let mut out = vec![0i16; rows];
        fully_connected_mixed(&x15, &weight_byteswap_rows(&w, cols), &bias, q, &mut out).map_err(err)?;
        ensure(out == want, || format!("fc mixed {rows}x{cols}"))?;
        counts[0] += 1;
        counts[1] += 1;
        counts[2] += 1;
    }

    // conv and depthwise conv
    while counts[3] < CASES || counts[4] < CASES {
        let shape = rand_shape(&mut rng);
        let Some(p) = rand_conv(&mut rng, shape) else { continue };
        let t = rand_tensor(&mut rng, shape);
        let c_out = rng.gen_range(1..=16);
        let w = rand_q7(&mut rng, c_out * p.kernel * p.kernel * shape.channels);
        let bias = rand_q7(&mut rng, c_out);
        let mut scratch = vec![0i16; p.scratch_len(shape.channels)];
        let got = conv_hwc_q7(&t, &w, &bias, &p, &mut scratch).map_err(err)?;
        ensure(got == ref_conv(&t, &w, &bias, &p).map_err(err)?, || format!("conv {shape} {p:?}"))?;
        counts[3] += 1;

        let w = rand_q7(&mut rng, p.kernel * p.kernel * shape.channels);
        let bias = rand_q7(&mut rng, shape.channels);
        let got = depthwise_conv_hwc_q7(&t, &w, &bias, &p).map_err(err)?;
        ensure(got == ref_depthwise_conv(&t, &w, &bias, &p).map_err(err)?, || format!("depthwise {shape} {p:?}"))?;
        counts[4] += 1;
    }

    // pooling
    let (max_n, avg_n) = pooling_cases(&mut rng, CASES)?;
    counts[5] = max_n;
    counts[6] = avg_n;

    // ReLU: exhaustive per lane, then random buffers
    for lane in 0..4 {
        for v in -128i16..=127 {
            let mut d = [0x55u8 as i8, -3, 7, -128];
            d[lane] = v as i8;
            let want = ref_relu(&d);
            relu_swar_q7(&mut d);
            ensure(d[..] == want[..], || format!("relu lane {lane} value {v}"))?;
        }
    }
    for _ in 0..CASES {
        let n = rng.gen_range(1..=16 * 16);
        let mut d = rand_q7(&mut rng, n);
        let want = ref_relu(&d);
        relu_swar_q7(&mut d);
        ensure(d == want, || format!("relu len {n}"))?;
        counts[7] += 1;
    }

    // table activations
    for _ in 0..CASES {
        let func = if rng.gen() { LutFunc::Sigmoid } else { LutFunc::Tanh };
        let mode = if rng.gen() { LutMode::Unified } else { LutMode::TwoRegion };
        let entries = 1usize << rng.gen_range(3..=10);
        let width = if rng.gen() { Width::Q7 } else { Width::Q15 };
        let table = build_lut(func, mode, rng.gen_range(2..=3), entries, width).map_err(err)?;
        let interpolate = rng.gen();
        let n = rng.gen_range(1..=64);
        let in_frac = rng.gen_range(0..8);
        let mut d: Vec<i8> = (0..n).map(|_| rng.gen()).collect();
        let want = ref_lut_apply_q7(&d, in_frac, &table, interpolate);
        activation_lut_apply_q7(&mut d, in_frac, &table, interpolate).map_err(err)?;
        ensure(d == want, || format!("lut q7 {func:?} {mode:?} {entries} {width:?}"))?;
        counts[8] += 1;
        if width == Width::Q15 {
            let in_frac = rng.gen_range(0..16);
            let mut d: Vec<i16> = (0..n).map(|_| rng.gen()).collect();
            let want = ref_lut_apply_q15(&d, in_frac, &table, interpolate);
            activation_lut_apply_q15(&mut d, in_frac, &table, interpolate).map_err(err)?;
            ensure(d == want, || format!("lut q15 {func:?} {mode:?} {entries}"))?;
            counts[9] += 1;
        }
    }
    ensure(counts[..9].iter().all(|c| *c >= CASES), || format!("case counts {counts:?}"))?;
    Ok(format!(
        "fc basic/opt/mixed {}/{}/{}, conv {}, depthwise {}, maxpool {}, avgpool {}, relu {} + 1024 exhaustive, lut q7 {} (+{} q15)",
        counts[0], counts[1], counts[2], counts[3], counts[4], counts[5], counts[6], counts[7], counts[8], counts[9]
    ))
}

/// Runs random max and average pooling instances, returning how many ran.
fn pooling_cases(rng: &mut impl Rng, n: usize) -> Result<(usize, usize), String> {
    let (mut max_n, mut avg_n, mut padded) = (0, 0, 0);
    while max_n < n || avg_n < n {
        let shape = rand_shape(rng);
        let g = PoolGeometry::new(rng.gen_range(1..=5), rng.gen_range(1..=3), rng.gen_range(0..=2));
        if g.output_shape(shape).is_err() {
            continue;
        }
        let t = rand_tensor(rng, shape);
        let mut got = t.clone();
        maxpool_insitu(&mut got, g).map_err(err)?;
        ensure(got == ref_pool_window(&t, g, PoolKind::Max).map_err(err)?, || format!("maxpool {shape} {g:?}"))?;
        let mut got = t.clone();
        avgpool_insitu(&mut got, g).map_err(err)?;
        ensure(got == ref_pool_window(&t, g, PoolKind::Average).map_err(err)?, || format!("avgpool {shape} {g:?}"))?;
        max_n += 1;
        avg_n += 1;
        padded += usize::from(g.pad > 0);
    }
    ensure(padded >= n / 4, || format!("only {padded} padded pooling cases"))?;
    Ok((max_n, avg_n))
}

fn reordering() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for n in 0..=64 {
        let w = rand_q7(&mut rng, n);
        let via_swap = q7_to_q15_noreorder_vec(&weight_byteswap_preprocess(&w));
        ensure(via_swap == q7_to_q15_ordered_vec(&w), || format!("byteswap order, length {n}"))?;
        let direct: Vec<i16> = w.iter().map(|v| *v as i16).collect();
        ensure(via_swap == direct, || format!("expansion values, length {n}"))?;
    }
    let mut pairs = 0;
    for rows in 1..=16 {
        for cols in 1..=16 {
            let w = rand_q7(&mut rng, rows * cols);
            let rw = weight_reorder_1x4(&w, rows, cols).map_err(err)?;
            ensure(rw.deinterleave() == w, || format!("deinterleave {rows}x{cols}"))?;
            let x = rand_q7(&mut rng, cols);
            let bias = rand_q7(&mut rng, rows);
            let q = rand_quant(&mut rng);
            let mut buf = vec![0i16; cols];
            let (mut a, mut b) = (vec![0i8; rows], vec![0i8; rows]);
            fully_connected_q7_basic(&x, &w, &bias, q, &mut buf, &mut a).map_err(err)?;
            fully_connected_q7_opt(&x, &rw, &bias, q, &mut buf, &mut b).map_err(err)?;
            ensure(a == b, || format!("opt != basic at {rows}x{cols}"))?;
            pairs += 1;
        }
    }
    Ok(format!("byteswap lengths 0..=64, {pairs} row/col shapes covering every residue mod 4"))
}

fn partial_im2col() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut n = 0;
    while n < 300 {
        let shape = rand_shape(&mut rng);
        let Some(p) = rand_conv(&mut rng, shape) else { continue };
        let t = rand_tensor(&mut rng, shape);
        let c_out = rng.gen_range(1..=16);
        let w = rand_q7(&mut rng, c_out * p.kernel * p.kernel * shape.channels);
        let bias = rand_q7(&mut rng, c_out);
        let full = p.full_im2col(shape).map_err(err)?;
        let a = conv_hwc_q7(&t, &w, &bias, &p, &mut vec![0; p.scratch_len(shape.channels)]).map_err(err)?;
        let b = conv_hwc_q7(&t, &w, &bias, &full, &mut vec![0; full.scratch_len(shape.channels)]).map_err(err)?;
        ensure(a == b, || format!("partial vs full at {shape} {p:?}"))?;
        n += 1;
    }
    let m = cifar10(0, false).map_err(err)?;
    let partial = plan_memory(&m, Im2col::Partial(2)).map_err(err)?;
    let full = plan_memory(&m, Im2col::Full).map_err(err)?;
    for ((l, lp), lf) in m.layers.iter().zip(&partial.layers).zip(&full.layers) {
        if l.kind != LayerKind::Conv {
            continue;
        }
        let col = l.kernel * l.kernel * l.in_shape.channels * 2;
        ensure(lp.scratch_bytes == 2 * col, || format!("{} partial scratch {}", l.name, lp.scratch_bytes))?;
        ensure(lf.scratch_bytes == l.out_shape.pixels() * col, || format!("{} full scratch {}", l.name, lf.scratch_bytes))?;
    }
    ensure(partial.layers[0].scratch_bytes == 300 && full.layers[0].scratch_bytes == 153_600, || {
        format!("layer 1 scratch {} / {}", partial.layers[0].scratch_bytes, full.layers[0].scratch_bytes)
    })?;
    ensure(partial.peak_bytes() < full.peak_bytes(), || "partial peak not below full".into())?;
    Ok(format!(
        "{n} random convs identical; layer 1 scratch 300 B vs 153600 B; peak {} B vs {} B",
        partial.peak_bytes(),
        full.peak_bytes()
    ))
}

fn pooling() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (max_n, avg_n) = pooling_cases(&mut rng, CASES)?;
    Ok(format!("{max_n} max and {avg_n} average instances match the window oracle"))
}

fn lut_accuracy() -> Check {
    const POINTS: usize = 100_000;
    const LSB: f64 = 1.0 / 128.0;
    let mut lines = Vec::new();
    for func in [LutFunc::Sigmoid, LutFunc::Tanh] {
        let unified = build_lut(func, LutMode::Unified, 3, 256, Width::Q7).map_err(err)?;
        let two = build_lut(func, LutMode::TwoRegion, 3, 256, Width::Q7).map_err(err)?;
        let plain = sweep_max_error(&unified, SweepInput::Q7, false, POINTS).map_err(err)?;
        let interp = sweep_max_error(&unified, SweepInput::Q15, true, POINTS).map_err(err)?;
        let two_err = sweep_max_error(&two, SweepInput::Q15, true, POINTS).map_err(err)?;
        ensure(plain <= 2.0 * LSB, || format!("{func:?} unified {:.3} LSB", plain / LSB))?;
        ensure(interp <= LSB, || format!("{func:?} interpolated {:.3} LSB", interp / LSB))?;
        ensure(two_err <= LSB, || format!("{func:?} two-region {:.3} LSB", two_err / LSB))?;
        lines.push(format!(
            "{func:?}: unified {:.4}, interpolated {:.4}, two-region {:.4} LSB",
            plain / LSB,
            interp / LSB,
            two_err / LSB
        ));
    }
    Ok(lines.join("; "))
}

/// Noise over a per-image colour cast and a horizontal or vertical ramp, so
/// inputs differ in more than their noise.
fn structured_image(rng: &mut impl Rng) -> QTensor<i8> {
    let shape = Shape::new(32, 32, 3);
    let cast: [i32; 3] = [rng.gen_range(-64..=64), rng.gen_range(-64..=64), rng.gen_range(-64..=64)];
    let slope: i32 = rng.gen_range(-3..=3);
    let vertical: bool = rng.gen();
    let noise: i32 = rng.gen_range(0..=64);
    let mut data = Vec::with_capacity(shape.len());
    for y in 0..32i32 {
        for x in 0..32i32 {
            let ramp = slope * (if vertical { y } else { x } - 16);
            for c in cast {
                data.push((c + ramp + rng.gen_range(-noise..=noise)).clamp(-128, 127) as i8);
            }
        }
    }
    QTensor::new(shape, 7, data).unwrap()
}

fn end_to_end() -> Check {
    let model = cifar10(2024, false).map_err(err)?;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let inputs: Vec<QTensor<i8>> = (0..100).map(|_| structured_image(&mut rng)).collect();
    let runner = Runner::new(&model, Im2col::default(), Execution::Sequential).map_err(err)?;
    let results = par::map_init(&inputs, || runner.clone(), |r, x| {
        let fast = r.run(x).map_err(err)?;
        let slow = run_reference(&model, x).map_err(err)?;
        Ok::<_, String>((fast.output == slow.output, fast.argmax() == slow.argmax(), fast.argmax()))
    });
    let mut classes = [0usize; 10];
    for (i, r) in results.into_iter().enumerate() {
        let (logits, argmax, class) = r?;
        ensure(logits && argmax, || format!("input {i} diverges"))?;
        classes[class] += 1;
    }
    Ok(format!("100 inputs, identical logits and argmax; class histogram {classes:?}"))
}

fn main() -> ExitCode {
    let checks: [(&str, CheckFn); 8] = [
        ("op counts", op_counts),
        ("weight and activation sizes", memory_sizes),
        ("kernel/oracle equivalence", kernel_equivalence),
        ("reordering contracts", reordering),
        ("partial im2col equivalence and footprint", partial_im2col),
        ("in-situ pooling equivalence", pooling),
        ("table activation accuracy", lut_accuracy),
        ("end-to-end pipeline", end_to_end),
    ];
    let mut failed = 0;
    for (name, check) in checks {
        let start = Instant::now();
        let outcome = check();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS  {name} ({secs:.2}s): {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name} ({secs:.2}s): {detail}");
            }
        }
    }
    if failed == 0 {
        println!("all {} acceptance checks passed", checks.len());
        ExitCode::SUCCESS
    } else {
        println!("{failed} of {} acceptance checks failed", checks.len());
        ExitCode::FAILURE
    }
}
