//! Trains one model on the synthetic three-pattern cohort and prints the
//! monitor trace with the clustering accuracy against the known patterns.
//!
//! `cargo run --release -p smilegan --example synthetic_run -- [seed] [max_epoch]`

use smilegan::data::{generate_synthetic, AtrophySpec, SyntheticCounts};
use smilegan::model::{train_with_observer, TrainObserver};
use smilegan::monitor::MonitorRecord;
use smilegan::selection::{match_accuracy, Partition};
use smilegan::{Matrix, SmileGanModel, TrainingConfig};

struct Printer {
    every: usize,
    pt: Matrix,
    truth: Partition,
}

impl TrainObserver for Printer {
    fn on_epoch(&mut self, model: &SmileGanModel, r: &MonitorRecord) {
        if r.epoch % self.every != 0 && !r.stop {
            return;
        }
        let pred = Partition::from_probabilities(&model.assign(&self.pt).expect("finite model"));
        let (acc, _) = match_accuracy(&pred, &self.truth).expect("same length");
        println!(
            "epoch {:4}  wd {:>10.5}  aq {:4}  loss {:.4}  acc {:.4}{}",
            r.epoch,
            r.wd_aggregate.unwrap_or(f64::NAN),
            r.alteration_quantity,
            r.cluster_loss,
            acc,
            if r.stop { "  stop" } else { "" }
        );
    }
}

fn main() {
    let args: Vec<u64> = std::env::args().skip(1).map(|a| a.parse().expect("integer argument")).collect();
    let seed = args.first().copied().unwrap_or(1);
    let max_epoch = args.get(1).map_or(3000, |&e| e as usize);
    let (table, truth) = generate_synthetic(&AtrophySpec::three_pattern(), SyntheticCounts::benchmark(), seed)
        .expect("preset is valid");
    let config = TrainingConfig { m: 3, max_epoch, ..Default::default() };
    let mut printer = Printer { every: 50, pt: table.pt_rows(), truth: Partition::from_labels(truth.pt_labels()) };
    let start = std::time::Instant::now();
    let out = train_with_observer(&table.cn_rows(), &table.pt_rows(), &config, seed, &mut printer)
        .expect("training finishes");
    println!("epochs {}  elapsed {:.1}s", out.model.epoch, start.elapsed().as_secs_f64());
}
