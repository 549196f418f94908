//! Per-epoch CSV logs and the end-of-run summary.

use std::path::Path;
use std::time::Duration;

use bnnx::optim::OptimKind;
use bnnx::train::{EpochRecord, TrainConfig};

use crate::data::write_bytes;
use crate::CliResult;

pub const CSV_HEADER: &str = "epoch,train_loss,train_top1,val_top1,val_top5";

/// f64 Display is shortest round-trip, so two identical runs serialize to
/// identical bytes. Nothing here may depend on locale or time.
pub fn render_csv(records: &[EpochRecord]) -> String {
    let mut out = String::with_capacity(64 * (records.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.epoch, r.train_loss, r.train_top1, r.val_top1, r.val_top5
        ));
    }
    out
}

pub fn write_csv(path: &Path, records: &[EpochRecord]) -> CliResult<()> {
    write_bytes(path, render_csv(records).as_bytes())
}

/// Config echo, final row, wall clock. The final metrics are read off the
/// last epoch record, so they always equal the last evaluation row.
pub fn print_train_summary(what: &str, cfg: &TrainConfig, records: &[EpochRecord], wall: Duration) {
    let lr = match cfg.optimizer {
        OptimKind::Adam(p) => p.lr,
        OptimKind::Sgd(p) => p.lr,
    };
    println!(
        "{what}: epochs={} batch-size={} seed={} optimizer={} lr={} clip={}",
        cfg.epochs,
        cfg.batch_size,
        cfg.seed,
        cfg.optimizer.name(),
        lr,
        if cfg.clip_binary_weights { "on" } else { "off" }
    );
    if let Some(last) = records.last() {
        println!("train_loss {}", last.train_loss);
        println!("train_top1 {}", last.train_top1);
        println!("top1 {}", last.val_top1);
        println!("top5 {}", last.val_top5);
    }
    println!("wall_seconds {:.2}", wall.as_secs_f64());
}
