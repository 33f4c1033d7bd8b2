//! Layer-by-layer execution through the optimized kernels or the oracles.

use std::time::{Duration, Instant};

use super::model::{LayerKind, LayerSpec, Model};
use super::ops::layer_ops;
use super::plan::{conv_params_for, Im2col};
use crate::error::{Error, Result};
use crate::kernels::conv::{conv_hwc_q7_into, conv_hwc_q7_par_into, ConvParams};
use crate::kernels::depthwise::{depthwise_conv_hwc_q7_into, depthwise_conv_hwc_q7_par_into};
use crate::kernels::fc::{fully_connected_q7_opt, weight_reorder_1x4, ReorderedWeights, WeightLayout};
use crate::kernels::lut::{activation_lut_apply_q7, LutFunc, LutTable};
use crate::kernels::pool::{avgpool_insitu_slice, maxpool_insitu_slice};
use crate::kernels::relu::relu_swar_q7;
use crate::kernels::tensor::QTensor;
use crate::par;
use crate::reference::{ref_conv, ref_depthwise_conv, ref_fc, ref_lut_apply_q7, ref_pool_window, ref_relu, PoolKind};

/// Whether convolutions split their output rows across threads.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Execution {
    #[default]
    Sequential,
    Parallel,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerStat {
    pub name: String,
    pub kind: LayerKind,
    pub ops: u64,
    pub elapsed: Duration,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunOutput {
    pub output: QTensor<i8>,
    pub layers: Vec<LayerStat>,
}

impl RunOutput {
    /// Index of the largest output value; the first one on ties.
    pub fn argmax(&self) -> usize {
        let d = self.output.data();
        (0..d.len()).fold(0, |best, i| if d[i] > d[best] { i } else { best })
    }

    pub fn elapsed(&self) -> Duration {
        self.layers.iter().map(|l| l.elapsed).sum()
    }
}

fn lut_func(kind: LayerKind) -> Option<LutFunc> {
    match kind {
        LayerKind::Sigmoid => Some(LutFunc::Sigmoid),
        LayerKind::Tanh => Some(LutFunc::Tanh),
        _ => None,
    }
}

fn check_input(model: &Model, input: &QTensor<i8>) -> Result<()> {
    if input.shape() != model.input_shape || input.frac_bits() != model.input_frac {
        return Err(Error::Shape(format!(
            "model expects {} input with frac {}, got {} with frac {}",
            model.input_shape,
            model.input_frac,
            input.shape(),
            input.frac_bits()
        )));
    }
    Ok(())
}

/// Per-layer state prepared once: resolved conv parameters, interleaved fc
/// weights, activation tables.
#[derive(Clone, Debug)]
enum Prepared {
    Conv(ConvParams),
    Fc(ReorderedWeights),
    Lut(LutTable, bool),
    Plain,
}

/// Runs a model through the optimized kernels, reusing its buffers across
/// calls. Each runner owns its memory; run several for concurrency.
#[derive(Clone, Debug)]
pub struct Runner<'m> {
    model: &'m Model,
    execution: Execution,
    prepared: Vec<Prepared>,
    buffers: [Vec<i8>; 2],
    scratch: Vec<i16>,
}

impl<'m> Runner<'m> {
    pub fn new(model: &'m Model, im2col: Im2col, execution: Execution) -> Result<Self> {
        model.validate()?;
        let mut prepared = Vec::with_capacity(model.layers.len());
        let mut sizes = [model.input_shape.len(), 0];
        let mut current = 0;
        let mut scratch = 0;
        for l in &model.layers {
            let p = match l.kind {
                LayerKind::Conv => {
                    let p = conv_params_for(l, im2col)?;
                    scratch = scratch.max(p.scratch_len(l.in_shape.channels));
                    Prepared::Conv(p)
                }
                LayerKind::DepthwiseConv => Prepared::Conv(l.conv_params()),
                LayerKind::FullyConnected => {
                    let (w, _) = model.layer_params(l);
                    let (rows, cols) = (l.out_shape.len(), l.in_shape.len());
                    scratch = scratch.max(cols);
                    Prepared::Fc(if l.reordered {
                        ReorderedWeights::from_raw(rows, cols, w.to_vec(), WeightLayout::Interleaved1x4)?
                    } else {
                        weight_reorder_1x4(w, rows, cols)?
                    })
                }
                LayerKind::Sigmoid | LayerKind::Tanh => {
                    let spec = l.lut.unwrap_or_default();
                    Prepared::Lut(spec.build(lut_func(l.kind).unwrap())?, spec.interpolate)
                }
                _ => Prepared::Plain,
            };
            prepared.push(p);
            if !l.kind.in_place() {
                current = 1 - current;
            }
            sizes[current] = sizes[current].max(l.out_shape.len());
        }
        Ok(Runner {
            model,
            execution,
            prepared,
            buffers: [vec![0; sizes[0]], vec![0; sizes[1]]],
            scratch: vec![0; scratch],
        })
    }

    pub fn model(&self) -> &Model {
        self.model
    }

    pub fn run(&mut self, input: &QTensor<i8>) -> Result<RunOutput> {
        check_input(self.model, input)?;
        self.buffers[0][..input.data().len()].copy_from_slice(input.data());
        let mut current = 0;
        let mut stats = Vec::with_capacity(self.model.layers.len());
        for (l, prep) in self.model.layers.iter().zip(&self.prepared) {
            let start = Instant::now();
            let next = if l.kind.in_place() { current } else { 1 - current };
            Self::layer(self.model, self.execution, &mut self.buffers, &mut self.scratch, l, prep, current)?;
            stats.push(LayerStat { name: l.name.clone(), kind: l.kind, ops: layer_ops(l), elapsed: start.elapsed() });
            current = next;
        }
        let shape = self.model.output_shape();
        let output = QTensor::new(shape, self.model.output_frac(), self.buffers[current][..shape.len()].to_vec())?;
        Ok(RunOutput { output, layers: stats })
    }

    fn layer(
        model: &Model,
        execution: Execution,
        buffers: &mut [Vec<i8>; 2],
        scratch: &mut [i16],
        l: &LayerSpec,
        prep: &Prepared,
        current: usize,
    ) -> Result<()> {
        let (w, bias) = model.layer_params(l);
        let (in_len, out_len) = (l.in_shape.len(), l.out_shape.len());
        let parallel = execution == Execution::Parallel;
        let [b0, b1] = buffers;
        let (src, dst) = if current == 0 { (b0, b1) } else { (b1, b0) };
        let src_in = &src[..in_len];
        match (l.kind, prep) {
            (LayerKind::Conv, Prepared::Conv(p)) => {
                if parallel {
                    conv_hwc_q7_par_into(src_in, l.in_shape, w, bias, p, &mut dst[..out_len])?;
                } else {
                    conv_hwc_q7_into(src_in, l.in_shape, w, bias, p, scratch, &mut dst[..out_len])?;
                }
            }
            (LayerKind::DepthwiseConv, Prepared::Conv(p)) => {
                if parallel {
                    depthwise_conv_hwc_q7_par_into(src_in, l.in_shape, w, bias, p, &mut dst[..out_len])?;
                } else {
                    depthwise_conv_hwc_q7_into(src_in, l.in_shape, w, bias, p, &mut dst[..out_len])?;
                }
            }
            (LayerKind::FullyConnected, Prepared::Fc(rw)) => {
                fully_connected_q7_opt(src_in, rw, bias, l.quant, scratch, &mut dst[..out_len])?;
            }
            (LayerKind::Maxpool, _) => {
                maxpool_insitu_slice(&mut src[..in_len], l.in_shape, l.pool_geometry())?;
            }
            (LayerKind::Avgpool, _) => {
                avgpool_insitu_slice(&mut src[..in_len], l.in_shape, l.pool_geometry())?;
            }
            (LayerKind::Relu, _) => relu_swar_q7(&mut src[..in_len]),
            (LayerKind::Sigmoid | LayerKind::Tanh, Prepared::Lut(table, interpolate)) => {
                activation_lut_apply_q7(&mut src[..in_len], l.in_frac, table, *interpolate)?;
            }
            _ => unreachable!("layer state prepared for a different kind"),
        }
        Ok(())
    }
}

/// Runs `model` once through the optimized kernels with default settings.
pub fn run(model: &Model, input: &QTensor<i8>) -> Result<RunOutput> {
    Runner::new(model, Im2col::default(), Execution::Sequential)?.run(input)
}

/// Runs `model` through the naive oracles.
pub fn run_reference(model: &Model, input: &QTensor<i8>) -> Result<RunOutput> {
    model.validate()?;
    check_input(model, input)?;
    let mut t = input.clone();
    let mut stats = Vec::with_capacity(model.layers.len());
    for l in &model.layers {
        let start = Instant::now();
        let (w, bias) = model.layer_params(l);
        let out = match l.kind {
            LayerKind::Conv => ref_conv(&t, w, bias, &l.conv_params())?,
            LayerKind::DepthwiseConv => ref_depthwise_conv(&t, w, bias, &l.conv_params())?,
            LayerKind::FullyConnected => {
                let (rows, cols) = (l.out_shape.len(), l.in_shape.len());
                let row_major = if l.reordered {
                    ReorderedWeights::from_raw(rows, cols, w.to_vec(), WeightLayout::Interleaved1x4)?.deinterleave()
                } else {
                    w.to_vec()
                };
                QTensor::new(l.out_shape, 0, ref_fc(t.data(), &row_major, bias, l.quant)?)?
            }
            LayerKind::Maxpool => ref_pool_window(&t, l.pool_geometry(), PoolKind::Max)?,
            LayerKind::Avgpool => ref_pool_window(&t, l.pool_geometry(), PoolKind::Average)?,
            LayerKind::Relu => QTensor::new(l.out_shape, 0, ref_relu(t.data()))?,
            LayerKind::Sigmoid | LayerKind::Tanh => {
                let spec = l.lut.unwrap_or_default();
                let table = spec.build(lut_func(l.kind).unwrap())?;
                QTensor::new(l.out_shape, 0, ref_lut_apply_q7(t.data(), l.in_frac, &table, spec.interpolate))?
            }
        };
        t = out.with_frac_bits(l.out_frac);
        stats.push(LayerStat { name: l.name.clone(), kind: l.kind, ops: layer_ops(l), elapsed: start.elapsed() });
    }
    Ok(RunOutput { output: t, layers: stats })
}

/// Runs every input through the optimized kernels. With
/// [`Execution::Parallel`] images are distributed over worker threads, each
/// with its own [`Runner`]; the layers themselves then run sequentially.
pub fn run_batch(model: &Model, inputs: &[QTensor<i8>], execution: Execution) -> Result<Vec<RunOutput>> {
    let mut first = Runner::new(model, Im2col::default(), Execution::Sequential)?;
    match execution {
        Execution::Sequential => inputs.iter().map(|x| first.run(x)).collect(),
        Execution::Parallel => par::map_init(
            inputs,
            || first.clone(),
            |runner, x| runner.run(x),
        )
        .into_iter()
        .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::model::{cifar10, ModelBuilder, Weighted};
    use crate::kernels::tensor::Shape;
    use crate::quant::QuantParams;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(seed: u64) -> QTensor<i8> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        QTensor::new(Shape::new(32, 32, 3), 7, (0..3072).map(|_| rng.gen()).collect()).unwrap()
    }

    #[test]
    fn single_relu() {
        let m = ModelBuilder::new(Shape::new(2, 2, 2), 4).relu("r").unwrap().build();
        let x = QTensor::new(Shape::new(2, 2, 2), 4, vec![-1, 2, -128, 127, 0, 5, -5, 1]).unwrap();
        assert_eq!(run(&m, &x).unwrap().output.data(), &[0, 2, 0, 127, 0, 5, 0, 1]);
    }

    #[test]
    fn zero_weights_give_requantized_bias() {
        let w = Weighted { weights: vec![0; 3 * 12], bias: vec![10, -10, 3], weight_frac: 7, quant: QuantParams::new(2, 3).unwrap() };
        let m = ModelBuilder::new(Shape::new(2, 2, 3), 7).fully_connected("fc", w, false).unwrap().build();
        let out = run(&m, &QTensor::new(Shape::new(2, 2, 3), 7, vec![9; 12]).unwrap()).unwrap();
        // (10 << 2) >> 3 rounded = 5; -40 -> -5; 12 -> 2 (1.5 rounds up)
        assert_eq!(out.output.data(), &[5, -5, 2]);
    }

    #[test]
    fn cifar10_matches_oracle() {
        let m = cifar10(11, true).unwrap();
        let x = random_image(1);
        let fast = run(&m, &x).unwrap();
        let slow = run_reference(&m, &x).unwrap();
        assert_eq!(fast.output, slow.output);
        assert_eq!(fast.argmax(), slow.argmax());
        assert_eq!(fast.layers.len(), 10);
        let par = Runner::new(&m, Im2col::Full, Execution::Parallel).unwrap().run(&x).unwrap();
        assert_eq!(par.output, fast.output);
    }

    #[test]
    fn batch_matches_single_runs() {
        let m = cifar10(2, false).unwrap();
        let xs: Vec<_> = (0..6).map(random_image).collect();
        let seq = run_batch(&m, &xs, Execution::Sequential).unwrap();
        let par = run_batch(&m, &xs, Execution::Parallel).unwrap();
        for ((a, b), x) in seq.iter().zip(&par).zip(&xs) {
            assert_eq!(a.output, b.output);
            assert_eq!(a.output, run(&m, x).unwrap().output);
        }
    }

    #[test]
    fn wrong_input_shape() {
        let m = cifar10(2, false).unwrap();
        let x = QTensor::<i8>::zeros(Shape::new(32, 32, 1), 7);
        assert!(matches!(run(&m, &x), Err(Error::Shape(_))));
    }
}
