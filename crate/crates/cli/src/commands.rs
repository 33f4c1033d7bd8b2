use std::fs;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use qnn::graph::{
    self, count_ops, format_ops, plan_memory, read_image, run_reference, save_model, write_image, Execution, Im2col,
    Model, Runner,
};
use qnn::kernels::lut::{build_lut, sweep_max_error, LutFunc, LutMode, SweepInput};
use qnn::quant::Width;
use qnn::{QTensor, Shape};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{BenchArgs, ExportInputArgs, ExportModelArgs, FuncArg, GenTablesArgs, ModeArg, ModelSource, PlanArgs, RunArgs};

const EXIT_IO: u8 = 3;
const EXIT_INVALID: u8 = 4;
const EXIT_DIVERGENCE: u8 = 5;

/// Kernel and oracle outputs differ.
#[derive(Debug, thiserror::Error)]
#[error("optimized kernels and reference oracles disagree: {0}")]
pub struct Divergence(String);

pub fn exit_code(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<Divergence>().is_some() {
        return EXIT_DIVERGENCE;
    }
    if e.downcast_ref::<std::io::Error>().is_some() {
        return EXIT_IO;
    }
    match e.downcast_ref::<qnn::Error>() {
        Some(qnn::Error::Io(_)) => EXIT_IO,
        _ => EXIT_INVALID,
    }
}

/// Parses `cifar10`, `cifar10-relu`, optionally followed by `:SEED`.
fn random_model(spec: &str) -> Result<Model> {
    let (name, seed) = match spec.split_once(':') {
        Some((n, s)) => (n, s.parse::<u64>().map_err(|_| qnn::Error::InvalidParam(format!("bad seed in '{spec}'")))?),
        None => (spec, 0),
    };
    let relu = match name {
        "cifar10" => false,
        "cifar10-relu" => true,
        other => return Err(qnn::Error::InvalidParam(format!("unknown built-in model '{other}'")).into()),
    };
    Ok(graph::cifar10(seed, relu)?)
}

fn load(source: &ModelSource) -> Result<Model> {
    match (&source.model, &source.random_model) {
        (Some(path), _) => graph::load_model(path).with_context(|| format!("loading model {}", path.display())),
        (None, Some(spec)) => random_model(spec),
        (None, None) => unreachable!("clap requires one model source"),
    }
}

fn random_input(shape: Shape, frac_bits: i32, seed: u64) -> QTensor<i8> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..shape.len()).map(|_| rng.gen()).collect();
    QTensor::new(shape, frac_bits, data).expect("length matches shape")
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

pub fn run(a: RunArgs) -> Result<()> {
    let model = load(&a.source)?;
    let input = match (&a.input, a.random_input) {
        (Some(path), _) => read_image(path).with_context(|| format!("reading input {}", path.display()))?,
        (None, Some(seed)) => random_input(model.input_shape, model.input_frac, seed),
        (None, None) => unreachable!("clap requires an input"),
    };
    let execution = if a.parallel { Execution::Parallel } else { Execution::Sequential };
    let out = Runner::new(&model, Im2col::default(), execution)?.run(&input)?;

    println!("{:<10} {:<16} {:>12} {:>12} {:>10}", "layer", "kind", "output", "ops", "ms");
    for (l, s) in model.layers.iter().zip(&out.layers) {
        println!(
            "{:<10} {:<16} {:>12} {:>12} {:>10.3}",
            s.name,
            s.kind.name(),
            l.out_shape.to_string(),
            s.ops,
            ms(s.elapsed)
        );
    }
    let total_ops: u64 = out.layers.iter().map(|s| s.ops).sum();
    println!("total ops {total_ops} ({}), {:.3} ms", format_ops(total_ops), ms(out.elapsed()));

    let frac = out.output.frac_bits();
    let values: Vec<String> = out.output.data().iter().map(|v| v.to_string()).collect();
    println!("output (q7, frac_bits {frac}): [{}]", values.join(", "));
    let reals: Vec<String> =
        out.output.dequantize().iter().map(|v| format!("{v:.4}")).collect();
    println!("output (real): [{}]", reals.join(", "));
    println!("argmax: {}", out.argmax());

    if a.oracle {
        let oracle = run_reference(&model, &input)?;
        if oracle.output != out.output {
            let first = out.output.data().iter().zip(oracle.output.data()).position(|(a, b)| a != b);
            println!("oracle: MISMATCH");
            return Err(Divergence(format!("first differing output index {first:?}")).into());
        }
        println!("oracle: MATCH");
    }
    Ok(())
}

pub fn plan(a: PlanArgs) -> Result<()> {
    let model = load(&a.source)?;
    let im2col = if a.full_im2col { Im2col::Full } else { Im2col::Partial(a.partial_cols) };
    let plan = plan_memory(&model, im2col)?;
    let ops = count_ops(&model);

    println!(
        "{:<10} {:<16} {:>12} {:>12} {:>10} {:>10} {:>10} {:>10}",
        "layer", "kind", "output", "ops", "", "weights", "out B", "scratch B"
    );
    for ((l, m), n) in model.layers.iter().zip(&plan.layers).zip(&ops.per_layer) {
        println!(
            "{:<10} {:<16} {:>12} {:>12} {:>10} {:>10} {:>10} {:>10}",
            l.name,
            l.kind.name(),
            l.out_shape.to_string(),
            n,
            format_ops(*n),
            m.weight_bytes,
            m.output_bytes,
            m.scratch_bytes
        );
    }
    let mode = match im2col {
        Im2col::Full => "full im2col".to_string(),
        Im2col::Partial(n) => format!("partial im2col, {n} columns"),
    };
    println!();
    println!("mode:               {mode}");
    println!("total ops:          {} ({})", ops.total, format_ops(ops.total));
    println!(
        "weights:            {} B ({} filter + {} bias, {:.2} KiB)",
        plan.weight_bytes,
        model.filter_bytes(),
        model.bias_bytes(),
        plan.weight_bytes as f64 / 1024.0
    );
    println!(
        "activations:        {} B summed over layer outputs ({:.2} KiB)",
        plan.total_activation_bytes,
        plan.total_activation_bytes as f64 / 1024.0
    );
    println!(
        "activation buffers: {} + {} B (largest in/out pair {} B)",
        plan.buffers[0], plan.buffers[1], plan.largest_pair.0
    );
    println!("scratch:            {} B", plan.scratch_bytes);
    println!("peak:               {} B ({:.2} KiB)", plan.peak_bytes(), plan.peak_bytes() as f64 / 1024.0);
    if !a.full_im2col {
        let full = plan_memory(&model, Im2col::Full)?;
        println!("peak (full im2col): {} B ({:.2} KiB)", full.peak_bytes(), full.peak_bytes() as f64 / 1024.0);
    }
    Ok(())
}

pub fn bench(a: BenchArgs) -> Result<()> {
    let model = load(&a.source)?;
    let input = random_input(model.input_shape, model.input_frac, a.seed);
    let execution = if a.parallel { Execution::Parallel } else { Execution::Sequential };
    let mut runner = Runner::new(&model, Im2col::default(), execution)?;

    let fast = runner.run(&input)?;
    let slow = run_reference(&model, &input)?;
    if fast.output != slow.output {
        return Err(Divergence("outputs differ before timing".into()).into());
    }

    let iters = a.iters.max(1);
    let n = model.layers.len();
    let (mut base, mut opt) = (vec![Duration::ZERO; n], vec![Duration::ZERO; n]);
    for _ in 0..iters {
        for (t, s) in opt.iter_mut().zip(runner.run(&input)?.layers) {
            *t += s.elapsed;
        }
        for (t, s) in base.iter_mut().zip(run_reference(&model, &input)?.layers) {
            *t += s.elapsed;
        }
    }

    println!("{} iterations, {} execution", iters, if a.parallel { "parallel" } else { "sequential" });
    println!("{:<10} {:<16} {:>14} {:>14} {:>8}", "layer", "kind", "baseline ms", "optimized ms", "ratio");
    let per = |d: Duration| ms(d) / iters as f64;
    for ((l, b), o) in model.layers.iter().zip(&base).zip(&opt) {
        println!(
            "{:<10} {:<16} {:>14.3} {:>14.3} {:>7.2}x",
            l.name,
            l.kind.name(),
            per(*b),
            per(*o),
            b.as_secs_f64() / o.as_secs_f64().max(1e-12)
        );
    }
    let (tb, to): (Duration, Duration) = (base.iter().sum(), opt.iter().sum());
    println!(
        "{:<10} {:<16} {:>14.3} {:>14.3} {:>7.2}x",
        "total",
        "",
        per(tb),
        per(to),
        tb.as_secs_f64() / to.as_secs_f64().max(1e-12)
    );
    Ok(())
}

pub fn gen_tables(a: GenTablesArgs) -> Result<()> {
    let func = match a.func {
        FuncArg::Sigmoid => LutFunc::Sigmoid,
        FuncArg::Tanh => LutFunc::Tanh,
    };
    let mode = match a.mode {
        ModeArg::Unified => LutMode::Unified,
        ModeArg::TwoRegion => LutMode::TwoRegion,
    };
    let range_pow = match a.range {
        4 => 2,
        8 => 3,
        r => return Err(qnn::Error::InvalidParam(format!("range must be 4 or 8, got {r}")).into()),
    };
    if a.points < 2 {
        bail!(qnn::Error::InvalidParam("at least two sweep points are needed".into()));
    }
    let table = build_lut(func, mode, range_pow, a.entries, Width::from_bits(a.entry_bits)?)?;
    if let Some(path) = &a.out {
        fs::write(path, table.to_bytes()).with_context(|| format!("writing {}", path.display()))?;
        println!("wrote {} ({} bytes)", path.display(), 16 + table.entries() * a.entry_bits as usize / 8);
    }
    println!(
        "{:?} {:?} table, {} entries of {} bits over [-{}, {})",
        func, mode, a.entries, a.entry_bits, a.range, a.range
    );
    println!("max |error| vs the real function over {} points (q0.7 output):", a.points);
    let rows = [
        ("q7 input, lookup", SweepInput::Q7, false),
        ("q15 input, lookup", SweepInput::Q15, false),
        ("q15 input, interpolated", SweepInput::Q15, true),
    ];
    for (label, input, interpolate) in rows {
        let e = sweep_max_error(&table, input, interpolate, a.points)?;
        println!("  {label:<24} {e:.6} ({:.3} LSB)", e * 128.0);
    }
    Ok(())
}

pub fn export_model(a: ExportModelArgs) -> Result<()> {
    let model = random_model(&a.random_model)?;
    save_model(&model, &a.out).with_context(|| format!("writing model to {}", a.out.display()))?;
    println!("wrote {} layers to {}", model.layers.len(), a.out.display());
    Ok(())
}

pub fn export_input(a: ExportInputArgs) -> Result<()> {
    let t = random_input(Shape::new(a.height, a.width, a.channels), a.frac_bits, a.seed);
    write_image(&t, &a.out).with_context(|| format!("writing {}", a.out.display()))?;
    println!("wrote {} image to {}", t.shape(), a.out.display());
    Ok(())
}
