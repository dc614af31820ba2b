use super::{backward, AdamState, Checkpoint, MlpConfig, NetworkParams};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::math::RngStream;

/// Outcome of a training run.
#[derive(Debug, Clone)]
pub struct TrainRun {
    pub params: NetworkParams,
    /// Snapshots at the requested epochs, in ascending epoch order.
    pub checkpoints: Vec<Checkpoint>,
    /// Complete state after the last epoch.
    pub final_state: Checkpoint,
    /// Mean per-sample training loss (NLL plus L2) of each epoch run.
    pub epoch_losses: Vec<f64>,
}

/// Where the batch order of resumed epochs comes from.
#[derive(Debug, Clone)]
pub enum BatchOrder {
    /// Continue the order stream saved in the checkpoint, so the resumed
    /// epochs visit the rows in the same order as the original run did.
    Replay,
    Fresh(Box<RngStream>),
}

struct State {
    params: NetworkParams,
    adam: AdamState,
    order: RngStream,
    epoch: usize,
}

impl State {
    fn snapshot(&self, digest: [u8; 32]) -> Checkpoint {
        Checkpoint {
            params: self.params.clone(),
            adam: self.adam.clone(),
            epoch_index: self.epoch,
            data_order: self.order.state(),
            config_digest: digest,
        }
    }
}

fn check_inputs(cfg: &MlpConfig, data: &Dataset, checkpoint_epochs: &[usize]) -> Result<()> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::invalid("empty training set"));
    }
    if data.dim() != cfg.input_dim {
        return Err(Error::shape(format!(
            "data has {} features, network expects {}",
            data.dim(),
            cfg.input_dim
        )));
    }
    if let Some(&e) = checkpoint_epochs.iter().find(|&&e| e > cfg.epochs) {
        return Err(Error::invalid(format!("checkpoint epoch {e} beyond {} epochs", cfg.epochs)));
    }
    Ok(())
}

/// Trains from scratch. Initial weights come from `rng.derive("init", 0)`
/// and the per-epoch shuffles from `rng.derive("order", 0)`; `rng` itself is
/// not advanced. A snapshot is taken after each epoch count listed in
/// `checkpoint_epochs` (0 means before any update, `epochs` the end state).
pub fn train_with_checkpoints(
    cfg: &MlpConfig,
    data: &Dataset,
    rng: &RngStream,
    checkpoint_epochs: &[usize],
) -> Result<TrainRun> {
    check_inputs(cfg, data, checkpoint_epochs)?;
    let params = NetworkParams::init(cfg, &mut rng.derive("init", 0));
    let state = State {
        adam: AdamState::new(&params),
        params,
        order: rng.derive("order", 0),
        epoch: 0,
    };
    run(cfg, data, state, checkpoint_epochs)
}

/// Single-checkpoint convenience form of [`train_with_checkpoints`].
pub fn train(
    cfg: &MlpConfig,
    data: &Dataset,
    rng: &RngStream,
    checkpoint_epoch: Option<usize>,
) -> Result<(NetworkParams, Option<Checkpoint>)> {
    let epochs: Vec<usize> = checkpoint_epoch.into_iter().collect();
    let run = train_with_checkpoints(cfg, data, rng, &epochs)?;
    Ok((run.params, run.checkpoints.into_iter().next()))
}

/// Continues training from `ckpt` on `data` up to `cfg.epochs`.
pub fn resume_train_run(
    cfg: &MlpConfig,
    ckpt: &Checkpoint,
    data: &Dataset,
    order: BatchOrder,
) -> Result<TrainRun> {
    check_inputs(cfg, data, &[])?;
    if ckpt.config_digest != cfg.digest() {
        return Err(Error::CheckpointMismatch("configuration digest differs".into()));
    }
    if !ckpt.params.matches(cfg) || !ckpt.adam.m.matches(cfg) || !ckpt.adam.v.matches(cfg) {
        return Err(Error::CheckpointMismatch("parameter shapes differ".into()));
    }
    if ckpt.epoch_index > cfg.epochs {
        return Err(Error::CheckpointMismatch(format!(
            "checkpoint at epoch {} of {}",
            ckpt.epoch_index, cfg.epochs
        )));
    }
    let state = State {
        params: ckpt.params.clone(),
        adam: ckpt.adam.clone(),
        order: match order {
            BatchOrder::Replay => RngStream::from_state(ckpt.data_order),
            BatchOrder::Fresh(s) => *s,
        },
        epoch: ckpt.epoch_index,
    };
    run(cfg, data, state, &[])
}

pub fn resume_train(
    cfg: &MlpConfig,
    ckpt: &Checkpoint,
    data: &Dataset,
    order: BatchOrder,
) -> Result<NetworkParams> {
    Ok(resume_train_run(cfg, ckpt, data, order)?.params)
}

fn run(cfg: &MlpConfig, data: &Dataset, mut state: State, checkpoint_epochs: &[usize]) -> Result<TrainRun> {
    let digest = cfg.digest();
    let n = data.len();
    let l2 = cfg.l2_for(n);
    let mut checkpoints = Vec::new();
    let mut epoch_losses = Vec::new();
    let mut order: Vec<usize> = Vec::with_capacity(n);
    let mut y_batch = Vec::with_capacity(cfg.batch_size);
    while state.epoch < cfg.epochs {
        if checkpoint_epochs.contains(&state.epoch) {
            checkpoints.push(state.snapshot(digest));
        }
        let epoch = state.epoch + 1;
        let diverged = |detail: String| Error::Diverged { epoch, detail };
        order.clear();
        order.extend(0..n);
        state.order.shuffle(&mut order);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let x_batch = data.x.select_rows(chunk);
            y_batch.clear();
            y_batch.extend(chunk.iter().map(|&i| data.y[i]));
            let (loss, grad) = backward(&state.params, cfg, &x_batch, &y_batch, l2).map_err(|e| match e {
                Error::Diverged { detail, .. } => diverged(detail),
                other => other,
            })?;
            if !grad.is_finite() {
                return Err(diverged("non-finite gradient".into()));
            }
            total += loss * chunk.len() as f64;
            state.adam.update(&mut state.params, &grad, cfg.learning_rate);
        }
        if !state.params.is_finite() {
            return Err(diverged("non-finite parameters".into()));
        }
        epoch_losses.push(total / n as f64);
        state.epoch = epoch;
    }
    let final_state = state.snapshot(digest);
    if checkpoint_epochs.contains(&cfg.epochs) {
        checkpoints.push(final_state.clone());
    }
    Ok(TrainRun {
        params: state.params,
        checkpoints,
        final_state,
        epoch_losses,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::Mat;
    use crate::network::predict;

    fn toy(n: usize, seed: u64) -> Dataset {
        let mut rng = RngStream::new(seed, 3);
        let xs: Vec<f64> = (0..n).map(|_| 2.0 * rng.uniform() - 1.0).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x + 0.1 * rng.standard_normal()).collect();
        Dataset::new(Mat::from_vec(n, 1, xs).unwrap(), ys).unwrap()
    }

    fn small_cfg() -> MlpConfig {
        MlpConfig {
            hidden_sizes: vec![16, 8],
            epochs: 12,
            ..MlpConfig::new(1)
        }
    }

    #[test]
    fn identical_seeds_give_bit_identical_networks() {
        let data = toy(70, 1);
        let cfg = small_cfg();
        let a = train(&cfg, &data, &RngStream::new(9, 0), None).unwrap().0;
        let b = train(&cfg, &data, &RngStream::new(9, 0), None).unwrap().0;
        assert_eq!(a.to_flat(), b.to_flat());
        let c = train(&cfg, &data, &RngStream::new(10, 0), None).unwrap().0;
        assert_ne!(a.to_flat(), c.to_flat());
    }

    #[test]
    fn resume_with_replayed_order_reproduces_full_run() {
        let data = toy(70, 2);
        let cfg = small_cfg();
        let rng = RngStream::new(4, 0);
        let full = train_with_checkpoints(&cfg, &data, &rng, &[5, 12]).unwrap();
        assert_eq!(full.checkpoints.len(), 2);
        assert_eq!(full.checkpoints[0].epoch_index, 5);
        let resumed = resume_train(&cfg, &full.checkpoints[0], &data, BatchOrder::Replay).unwrap();
        assert_eq!(resumed.to_flat(), full.params.to_flat());
        assert_eq!(full.checkpoints[1].params, full.params);
    }

    #[test]
    fn resume_at_final_epoch_is_a_no_op() {
        let data = toy(40, 3);
        let cfg = small_cfg();
        let run = train_with_checkpoints(&cfg, &data, &RngStream::new(1, 1), &[cfg.epochs]).unwrap();
        let again = resume_train(&cfg, &run.checkpoints[0], &data, BatchOrder::Replay).unwrap();
        assert_eq!(again, run.params);
    }

    #[test]
    fn resume_rejects_other_config() {
        let data = toy(40, 3);
        let cfg = small_cfg();
        let (_, ck) = train(&cfg, &data, &RngStream::new(1, 1), Some(3)).unwrap();
        let other = MlpConfig { learning_rate: 0.01, ..cfg };
        assert!(matches!(
            resume_train(&other, &ck.unwrap(), &data, BatchOrder::Replay),
            Err(Error::CheckpointMismatch(_))
        ));
    }

    #[test]
    fn checkpoint_past_end_rejected() {
        let cfg = small_cfg();
        assert!(train(&cfg, &toy(20, 1), &RngStream::new(1, 1), Some(13)).is_err());
    }

    #[test]
    fn learns_a_linear_trend() {
        let data = toy(200, 5);
        let cfg = MlpConfig {
            hidden_sizes: vec![16, 16],
            epochs: 150,
            l2_coefficient: Some(0.0),
            learning_rate: 0.005,
            ..MlpConfig::new(1)
        };
        let run = train_with_checkpoints(&cfg, &data, &RngStream::new(2, 0), &[]).unwrap();
        assert!(run.epoch_losses.last().unwrap() < &run.epoch_losses[0]);
        let grid = Mat::from_vec(5, 1, vec![-0.8, -0.4, 0.0, 0.4, 0.8]).unwrap();
        let (m, v) = predict(&run.params, &cfg, &grid);
        for (x, m) in grid.as_slice().iter().zip(&m) {
            assert!((m - 2.0 * x).abs() < 0.15, "x={x}: {m}");
        }
        for v in v {
            assert!(v < 0.1, "variance {v}");
        }
    }
}
