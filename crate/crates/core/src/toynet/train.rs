use std::io::Write;

use rand::seq::SliceRandom;

use super::data::SyntheticDataset;
use super::net::{backward, forward, softmax_cross_entropy, Head, ToyNetParams};
use crate::error::{Error, Result};
use crate::pooling::Phase;
use crate::rng::RngStream;

/// Stream id of the trainer; substreams split init, data, batching and head noise.
const TRAIN_STREAM: u64 = 0x70_79;

pub const TRACE_HEADER: &str = "step,loss,train_acc,test_acc";

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub head: Head,
    pub steps: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub n_train: usize,
    pub n_test: usize,
    /// Accuracies are recorded every `eval_every` steps and at the last step.
    pub eval_every: usize,
}

impl TrainConfig {
    pub fn new(head: Head, seed: u64) -> Self {
        Self {
            head,
            steps: 2000,
            learning_rate: 0.1,
            batch_size: 16,
            seed,
            n_train: 256,
            n_test: 256,
            eval_every: 250,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.head.validate()?;
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if self.steps == 0 {
            return bad("steps must be positive");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad("learning rate must be positive and finite");
        }
        if self.batch_size == 0 || self.batch_size > self.n_train {
            return bad("batch size must lie in 1..=n_train");
        }
        if self.n_train == 0 || self.n_test == 0 {
            return bad("train and test sets must be non-empty");
        }
        if self.eval_every == 0 {
            return bad("eval_every must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub step: usize,
    pub loss: f64,
    pub train_acc: Option<f64>,
    pub test_acc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainTrace {
    pub rows: Vec<TraceRow>,
    pub final_train_acc: f64,
    pub final_test_acc: f64,
    pub params: ToyNetParams,
}

impl TrainTrace {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::InvalidInput(format!("csv write failed: {e}"));
        w.write_record(TRACE_HEADER.split(',')).map_err(io)?;
        let opt = |v: Option<f64>| v.map(|a| a.to_string()).unwrap_or_default();
        for r in &self.rows {
            w.write_record([r.step.to_string(), r.loss.to_string(), opt(r.train_acc), opt(r.test_acc)])
                .map_err(io)?;
        }
        w.flush().map_err(|e| Error::InvalidInput(format!("csv write failed: {e}")))
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }
}

/// Test-phase accuracy over a whole dataset, in chunks of 64.
pub fn evaluate(params: &ToyNetParams, data: &SyntheticDataset, head: Head) -> Result<f64> {
    // test phase never draws; the stream is a placeholder
    let mut unused = RngStream::new(0, 0);
    let idx: Vec<usize> = (0..data.len()).collect();
    let mut correct = 0;
    for chunk in idx.chunks(64) {
        let (x, y) = data.batch(chunk)?;
        let (logits, _) = forward(params, &x, head, Phase::Test, &mut unused)?;
        for (n, &label) in y.iter().enumerate() {
            let row = &logits.data()[n * logits.n_channels()..(n + 1) * logits.n_channels()];
            let best = row
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |acc, (k, &v)| if v > acc.1 { (k, v) } else { acc });
            correct += usize::from(best.0 == label);
        }
    }
    Ok(correct as f64 / data.len() as f64)
}

/// Plain minibatch SGD on the synthetic texture set.
pub fn train_toy(cfg: &TrainConfig) -> Result<TrainTrace> {
    cfg.validate()?;
    let root = RngStream::new(cfg.seed, TRAIN_STREAM);
    let mut params = ToyNetParams::init(&root.substream(0));
    let train = SyntheticDataset::generate(cfg.n_train, &root.substream(1))?;
    let test = SyntheticDataset::generate(cfg.n_test, &root.substream(2))?;
    let mut order_rng = root.substream(3).generator();
    let mut head_rng = root.substream(4);

    let mut order: Vec<usize> = (0..cfg.n_train).collect();
    let mut cursor = cfg.n_train;
    let mut rows = Vec::with_capacity(cfg.steps);
    for step in 1..=cfg.steps {
        if cursor + cfg.batch_size > cfg.n_train {
            order.shuffle(&mut order_rng);
            cursor = 0;
        }
        let (x, y) = train.batch(&order[cursor..cursor + cfg.batch_size])?;
        cursor += cfg.batch_size;

        let (logits, cache) = forward(&params, &x, cfg.head, Phase::Train, &mut head_rng)?;
        let (loss, dlogits) = softmax_cross_entropy(&logits, &y)?;
        if !loss.is_finite() {
            return Err(Error::TrainingFailure { step, loss });
        }
        let grads = backward(&params, &cache, &dlogits)?;
        params.update_running_stats(&cache);
        params
            .sgd_step(&grads, cfg.learning_rate)
            .map_err(|_| Error::TrainingFailure { step, loss })?;

        let (train_acc, test_acc) = if step % cfg.eval_every == 0 || step == cfg.steps {
            (
                Some(evaluate(&params, &train, cfg.head)?),
                Some(evaluate(&params, &test, cfg.head)?),
            )
        } else {
            (None, None)
        };
        rows.push(TraceRow {
            step,
            loss,
            train_acc,
            test_acc,
        });
    }
    let last = rows.last().expect("at least one step");
    Ok(TrainTrace {
        final_train_acc: last.train_acc.unwrap_or(0.0),
        final_test_acc: last.test_acc.unwrap_or(0.0),
        rows,
        params,
    })
}
