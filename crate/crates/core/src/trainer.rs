//! Per-sample training loop: forward features → ADMM inference per capacity
//! group → flow + energy losses → backpropagation through the softplus head
//! and the network → momentum update. Also full hierarchical inference with
//! nesting enforcement.
//!
//! The solver's flows are frozen when the loss is differentiated; gradients
//! reach the parameters only through the capacity maps.

use serde::{Deserialize, Serialize};

use crate::capnet::{
    self, backward, capacity_head, capacity_head_backward, forward, sgd_momentum_step,
    MultiChannelImage, NetConfig, NetParams, OptimConfig,
};
use crate::error::{Error, Result};
use crate::evalmetrics;
use crate::field::ScalarField;
use crate::levelset::{threshold, Mask};
use crate::losses::{self, CapacityGradients, FlowLossForm, HuberParams, LossReport};
use crate::solver::{solve, SolverConfig};
use crate::synthdata::{self, Sample};

/// Training hyperparameters. Solver iterations and the optimizer defaults are
/// the published constants; the flow term can be disabled for the
/// energy-only ablation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub optim: OptimConfig,
    pub solver: SolverConfig,
    pub huber: HuberParams,
    pub loss_form: FlowLossForm,
    pub epochs: usize,
    pub shuffle_seed: u64,
    /// Threshold level for validation inference.
    pub level: f64,
    /// Train on flow + energy losses (the full objective) or energy only.
    pub include_flow_loss: bool,
    /// Global L2 gradient clip applied before each update. The energy term
    /// grows capacities without bound at the label by construction, and
    /// clipping keeps the induced weight drift from compounding.
    pub grad_clip_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            optim: OptimConfig::default(),
            solver: SolverConfig::default(),
            huber: HuberParams::default(),
            loss_form: FlowLossForm::default(),
            epochs: 30,
            shuffle_seed: 1,
            level: 0.5,
            include_flow_loss: true,
            grad_clip_norm: Some(1.0),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.level) {
            return Err(Error::Config("level must be in [0,1]".into()));
        }
        self.optim.validate()?;
        self.solver.validate()
    }
}

/// Per-epoch statistics. Loss means are per-sample sums over the three
/// regions; validation Dice is per region.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_total: f64,
    pub mean_flow: f64,
    pub mean_energy: f64,
    /// Mean Dice on the validation split (WT, TC, EC); NaN when no split.
    pub val_dice: [f64; 3],
}

/// Training history, one entry per completed epoch.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct TrainStats {
    pub epochs: Vec<EpochStats>,
}

/// Relaxed λ fields and nested masks from hierarchical inference.
#[derive(Clone, Debug)]
pub struct HierarchyResult {
    pub lambdas: [ScalarField; 3],
    pub masks: [Mask; 3],
}

/// One optimization step on one sample. `step_seed` drives dropout.
/// Returns the per-region loss reports measured before the update.
pub fn train_step(
    params: &mut NetParams,
    cfg: &NetConfig,
    sample: &Sample,
    tcfg: &TrainConfig,
    step_seed: u64,
) -> Result<[LossReport; 3]> {
    sample.validate()?;
    tcfg.validate()?;
    let (raw_maps, tape) = forward(params, cfg, &sample.image, true, step_seed)?;
    let groups = capacity_head(&raw_maps)?;
    if groups.len() != 3 {
        return Err(Error::WrongMapCount {
            expected: 9,
            got: raw_maps.len(),
        });
    }

    // The flow loss is a pixel mean while the energy term is an integral over
    // the domain; optimizing their raw sum makes the energy gradient scale
    // with the pixel count and destabilizes momentum SGD. The update
    // direction therefore weighs the energy gradient by the inverse domain
    // measure, pairing two per-pixel means; reported loss values keep the
    // integral convention.
    let inv_area = 1.0 / sample.domain().len() as f64;
    let mut reports = Vec::with_capacity(3);
    let mut grad_caps = Vec::with_capacity(3);
    for (caps, label) in groups.iter().zip(&sample.labels) {
        let flows = solve(caps, &tcfg.solver)?.final_state;
        let (flow_value, flow_grads) =
            losses::flow_loss(label, caps, &flows, &tcfg.huber, tcfg.loss_form)?;
        let (energy_value, energy_grads) = losses::energy_loss(label, caps, tcfg.solver.tv_mode)?;

        let scaled_energy = CapacityGradients {
            c_source: energy_grads.c_source.map(|g| g * inv_area),
            c_sink: energy_grads.c_sink.map(|g| g * inv_area),
            c_edge: energy_grads.c_edge.map(|g| g * inv_area),
        };
        if tcfg.include_flow_loss {
            grad_caps.push(flow_grads.add(&scaled_energy));
            reports.push(LossReport {
                flow_loss: flow_value,
                energy_loss: energy_value,
                total: flow_value + energy_value,
                grad: flow_grads.add(&energy_grads),
            });
        } else {
            // Energy-only ablation: the update drops the flow term; the
            // measured flow loss is still reported.
            grad_caps.push(scaled_energy);
            reports.push(LossReport {
                flow_loss: flow_value,
                energy_loss: energy_value,
                total: energy_value,
                grad: energy_grads,
            });
        }
    }

    let grad_raw = capacity_head_backward(&raw_maps, &grad_caps)?;
    backward(params, cfg, &tape, &grad_raw)?;
    if let Some(max_norm) = tcfg.grad_clip_norm {
        clip_gradient_norm(params, max_norm);
    }
    sgd_momentum_step(params, &tcfg.optim);

    Ok(reports.try_into().expect("three regions"))
}

/// Epochs of shuffled per-sample steps with per-epoch validation Dice.
/// `on_epoch` runs after each epoch (checkpointing, logging); returning
/// `false` stops training early.
pub fn train(
    params: &mut NetParams,
    cfg: &NetConfig,
    train_set: &[Sample],
    val_set: &[Sample],
    tcfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochStats, &NetParams) -> bool,
) -> Result<TrainStats> {
    if train_set.is_empty() {
        return Err(Error::EmptyDataset);
    }
    tcfg.validate()?;

    let mut stats = TrainStats::default();
    for epoch in 0..tcfg.epochs {
        let order = shuffled_indices(train_set.len(), tcfg.shuffle_seed.wrapping_add(epoch as u64));
        let mut sum_total = 0.0;
        let mut sum_flow = 0.0;
        let mut sum_energy = 0.0;
        for (pos, &idx) in order.iter().enumerate() {
            let step_seed = tcfg
                .shuffle_seed
                .wrapping_mul(0x0100_0000_01B3)
                .wrapping_add((epoch * train_set.len() + pos) as u64);
            let reports = train_step(params, cfg, &train_set[idx], tcfg, step_seed)?;
            sum_total += reports.iter().map(|r| r.total).sum::<f64>();
            sum_flow += reports.iter().map(|r| r.flow_loss).sum::<f64>();
            sum_energy += reports.iter().map(|r| r.energy_loss).sum::<f64>();
        }

        let n = train_set.len() as f64;
        let val_dice = validation_dice(params, cfg, val_set, &tcfg.solver, tcfg.level)?;
        let epoch_stats = EpochStats {
            epoch,
            mean_total: sum_total / n,
            mean_flow: sum_flow / n,
            mean_energy: sum_energy / n,
            val_dice,
        };
        stats.epochs.push(epoch_stats);
        if !on_epoch(&epoch_stats, params) {
            break;
        }
    }
    Ok(stats)
}

/// Mean validation Dice per region; NaN entries when the split is empty.
pub fn validation_dice(
    params: &NetParams,
    cfg: &NetConfig,
    val_set: &[Sample],
    scfg: &SolverConfig,
    level: f64,
) -> Result<[f64; 3]> {
    if val_set.is_empty() {
        return Ok([f64::NAN; 3]);
    }
    let mut sums = [0.0; 3];
    for sample in val_set {
        let result = infer_full(params, cfg, &sample.image, scfg, level)?;
        for (i, (pred, truth)) in result.masks.iter().zip(&sample.labels).enumerate() {
            sums[i] += evalmetrics::dice(pred, truth)?;
        }
    }
    let n = val_set.len() as f64;
    Ok([sums[0] / n, sums[1] / n, sums[2] / n])
}

/// Full hierarchical inference: three capacity groups, three independent
/// solves, thresholding at `level`, then nesting enforcement by intersection
/// (TC ∩= WT, EC ∩= TC).
pub fn infer_full(
    params: &NetParams,
    cfg: &NetConfig,
    image: &MultiChannelImage,
    scfg: &SolverConfig,
    level: f64,
) -> Result<HierarchyResult> {
    if !image.is_standardized() {
        return Err(Error::Config("inference expects a standardized image".into()));
    }
    let (raw_maps, _) = forward(params, cfg, image, false, 0)?;
    let groups = capacity_head(&raw_maps)?;
    if groups.len() != 3 {
        return Err(Error::WrongMapCount {
            expected: 9,
            got: raw_maps.len(),
        });
    }

    let mut lambdas = Vec::with_capacity(3);
    let mut masks = Vec::with_capacity(3);
    for caps in &groups {
        let result = solve(caps, scfg)?;
        masks.push(threshold(&result.final_state.lambda, level));
        lambdas.push(result.final_state.lambda);
    }
    let wt = masks[0].clone();
    let tc = masks[1].intersect(&wt);
    let ec = masks[2].intersect(&tc);

    Ok(HierarchyResult {
        lambdas: lambdas.try_into().expect("three groups"),
        masks: [wt, tc, ec],
    })
}

/// Rescale all gradient buffers so their global L2 norm is at most
/// `max_norm`.
fn clip_gradient_norm(params: &mut NetParams, max_norm: f64) {
    let norm = params
        .flat_gradients()
        .iter()
        .map(|g| g * g)
        .sum::<f64>()
        .sqrt();
    if norm > max_norm {
        let scale = max_norm / norm;
        for layer in params.layers_mut() {
            layer.grad_w.iter_mut().for_each(|g| *g *= scale);
            layer.grad_b.iter_mut().for_each(|g| *g *= scale);
        }
    }
}

/// Deterministic Fisher-Yates permutation of `0..n`.
fn shuffled_indices(n: usize, seed: u64) -> Vec<usize> {
    use rand::{Rng, SeedableRng};
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
    order
}

/// Convenience for tests and the CLI: build capacities for one sample with the
/// current network.
pub fn sample_capacities(
    params: &NetParams,
    cfg: &NetConfig,
    image: &MultiChannelImage,
) -> Result<Vec<crate::solver::CapacityMaps>> {
    let (raw_maps, _) = forward(params, cfg, image, false, 0)?;
    capacity_head(&raw_maps)
}

#[allow(unused_imports)]
use capnet as _capnet_reexport_check;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::GridDomain;
    use crate::synthdata::SynthConfig;

    fn tiny_net() -> (NetConfig, NetParams) {
        let cfg = NetConfig {
            in_channels: 4,
            down_widths: vec![4, 8],
            out_maps: 9,
            dropout_rate: 0.0,
            seed: 21,
        };
        let params = NetParams::init(&cfg).unwrap();
        (cfg, params)
    }

    fn quick_train_cfg() -> TrainConfig {
        TrainConfig {
            solver: SolverConfig {
                iterations: 15,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    fn one_sample() -> Sample {
        let cfg = SynthConfig {
            count: 1,
            height: 32,
            width: 32,
            seed: 13,
            ..Default::default()
        };
        synthdata::generate(&cfg).unwrap().pop().unwrap()
    }

    #[test]
    fn train_step_is_deterministic() {
        let sample = one_sample();
        let tcfg = quick_train_cfg();

        let (cfg, mut params_a) = tiny_net();
        let (_, mut params_b) = tiny_net();
        let ra1 = train_step(&mut params_a, &cfg, &sample, &tcfg, 5).unwrap();
        let rb1 = train_step(&mut params_b, &cfg, &sample, &tcfg, 5).unwrap();
        assert_eq!(ra1[0].total, rb1[0].total);
        let ra2 = train_step(&mut params_a, &cfg, &sample, &tcfg, 6).unwrap();
        let rb2 = train_step(&mut params_b, &cfg, &sample, &tcfg, 6).unwrap();
        assert_eq!(ra2[2].total, rb2[2].total);
        assert_eq!(params_a.flat_parameters(), params_b.flat_parameters());
    }

    #[test]
    fn zero_gradient_means_zero_update_without_decay() {
        let (_cfg, mut params) = tiny_net();
        let before = params.flat_parameters();
        // Zero gradients with wd = 0 leave the parameters untouched.
        let optim = OptimConfig {
            weight_decay: 0.0,
            ..Default::default()
        };
        sgd_momentum_step(&mut params, &optim);
        assert_eq!(params.flat_parameters(), before);
    }

    #[test]
    fn overfitting_one_sample_halves_the_loss() {
        let sample = one_sample();
        let (cfg, mut params) = tiny_net();
        let tcfg = quick_train_cfg();

        let mut totals = Vec::new();
        for step in 0..50 {
            let reports = train_step(&mut params, &cfg, &sample, &tcfg, step).unwrap();
            totals.push(reports.iter().map(|r| r.total).sum::<f64>());
        }
        assert!(
            totals[49] <= 0.5 * totals[0],
            "loss went from {} to {}",
            totals[0],
            totals[49]
        );

        // Windowed minima never increase.
        let window_min = |w: &[f64]| w.iter().cloned().fold(f64::INFINITY, f64::min);
        let mins: Vec<f64> = totals.chunks(10).map(window_min).collect();
        for pair in mins.windows(2) {
            assert!(
                pair[1] <= pair[0] + 1e-9,
                "window minima increased: {pair:?}"
            );
        }
    }

    #[test]
    fn train_records_one_entry_per_epoch_and_is_reproducible() {
        let sample = one_sample();
        let dataset = vec![sample.clone(), sample.clone()];
        let tcfg = TrainConfig {
            epochs: 2,
            ..quick_train_cfg()
        };
        let (cfg, mut params_a) = tiny_net();
        let stats_a = train(&mut params_a, &cfg, &dataset, &[sample.clone()], &tcfg, |_, _| true)
            .unwrap();
        assert_eq!(stats_a.epochs.len(), 2);
        assert!(stats_a.epochs[0].val_dice.iter().all(|d| d.is_finite()));

        let (_, mut params_b) = tiny_net();
        let stats_b = train(&mut params_b, &cfg, &dataset, &[sample], &tcfg, |_, _| true).unwrap();
        assert_eq!(params_a.flat_parameters(), params_b.flat_parameters());
        for (a, b) in stats_a.epochs.iter().zip(&stats_b.epochs) {
            assert_eq!(a.mean_total, b.mean_total);
            assert_eq!(a.val_dice, b.val_dice);
        }
    }

    #[test]
    fn train_rejects_empty_dataset() {
        let (cfg, mut params) = tiny_net();
        let tcfg = quick_train_cfg();
        assert!(matches!(
            train(&mut params, &cfg, &[], &[], &tcfg, |_, _| true),
            Err(Error::EmptyDataset)
        ));
    }

    #[test]
    fn infer_full_with_suppressed_sources_gives_empty_nested_masks() {
        let (cfg, mut params) = tiny_net();
        // Zero every layer, then push the source maps hard negative and give
        // the sinks some capacity: all three regions drain to background.
        params.zero_weights();
        let n_layers = params.layers().len();
        {
            let head = &mut params.layers_mut()[n_layers - 1];
            for g in 0..3 {
                head.bias[3 * g] = -20.0; // C_s ≈ 0
                head.bias[3 * g + 1] = 2.0; // C_t ≈ 2.1
                head.bias[3 * g + 2] = 0.0; // C_g = ln 2
            }
        }
        let sample = one_sample();
        let result = infer_full(
            &params,
            &cfg,
            &sample.image,
            &SolverConfig::default(),
            0.5,
        )
        .unwrap();
        for mask in &result.masks {
            assert_eq!(mask.count_ones(), 0);
        }
        assert!(result.masks[2].is_subset_of(&result.masks[1]));
        assert!(result.masks[1].is_subset_of(&result.masks[0]));
    }

    #[test]
    fn infer_full_always_nests() {
        let (cfg, params) = tiny_net();
        let sample = one_sample();
        let result = infer_full(
            &params,
            &cfg,
            &sample.image,
            &SolverConfig::default(),
            0.5,
        )
        .unwrap();
        assert!(result.masks[2].is_subset_of(&result.masks[1]));
        assert!(result.masks[1].is_subset_of(&result.masks[0]));
    }

    #[test]
    fn infer_full_rejects_unstandardized_images() {
        let (cfg, params) = tiny_net();
        let d = GridDomain::new(32, 32);
        let raw = MultiChannelImage::new(
            (0..4)
                .map(|c| ScalarField::from_fn(d, |r, col| (r + col + c) as f64))
                .collect(),
        );
        assert!(infer_full(&params, &cfg, &raw, &SolverConfig::default(), 0.5).is_err());
    }
}
