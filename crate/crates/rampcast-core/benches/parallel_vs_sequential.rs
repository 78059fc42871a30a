//! Compares the rayon map against its sequential fallback on the two hot
//! loops: per-sample gradient evaluation (training's inner batch) and
//! per-day ramp labeling. Both paths run the identical closure via
//! `exec::map_sequential` / `exec::map_parallel`, so the difference is pure
//! scheduling overhead vs. core count.
//!
//! Run with `cargo bench` (the `parallel` feature is on by default; the
//! parallel benches vanish without it).

use chrono::NaiveDate;
use criterion::{criterion_group, criterion_main, Criterion, Throughput};
use ndarray::Array2;
use rand::Rng;
use rampcast_core::exec;
use rampcast_core::neural::{backward, forward_train, init_params, CellKind, NetworkSpec};
use rampcast_core::ramps::extract_ramp;
use rampcast_core::rng::{stream_rng, Stream};

const BATCH: usize = 16;
const DAYS: usize = 365;
const PERIODS_PER_DAY: usize = 288;

/// One training batch: reduced but real LSTM (96×32 windows, hidden 24),
/// forward with dropout plus full backward per sample.
fn per_sample_gradients(c: &mut Criterion) {
    let spec = NetworkSpec::stacked(CellKind::Lstm, 32, &[24], &[0.15]).unwrap();
    let params = init_params(&spec, 11).unwrap();
    let mut rng = stream_rng(11, Stream::Init, 9, 9);
    let batch: Vec<(u64, Array2<f64>)> = (0..BATCH)
        .map(|i| {
            (
                i as u64,
                Array2::from_shape_fn((96, 32), |_| rng.gen_range(-1.0..1.0)),
            )
        })
        .collect();

    let grad_one = |(idx, x): &(u64, Array2<f64>)| {
        let mut rng = stream_rng(11, Stream::Dropout, 0, *idx);
        let (out, tape) = forward_train(&params, x, &mut rng).unwrap();
        backward(&params, &tape, 2.0 * (out - 0.5)).unwrap()
    };

    let mut group = c.benchmark_group("per_sample_gradients");
    group.throughput(Throughput::Elements(BATCH as u64));
    group.bench_function("sequential", |b| {
        b.iter(|| exec::map_sequential(&batch, grad_one))
    });
    #[cfg(feature = "parallel")]
    group.bench_function("parallel", |b| {
        b.iter(|| exec::map_parallel(&batch, grad_one))
    });
    group.finish();
}

/// A year of daily primary-ramp extraction over 288-period net-load series.
fn per_day_labeling(c: &mut Criterion) {
    let first = NaiveDate::from_ymd_opt(2021, 1, 1).unwrap();
    let mut rng = stream_rng(23, Stream::Init, 4, 4);
    let days: Vec<(NaiveDate, Vec<f64>)> = (0..DAYS)
        .map(|i| {
            // Rough duck shape: midday dip, evening rise, plus noise.
            let series: Vec<f64> = (0..PERIODS_PER_DAY)
                .map(|t| {
                    let hour = t as f64 / 12.0;
                    8000.0 - 2500.0 * (-((hour - 13.0) / 3.0).powi(2)).exp()
                        + 3000.0 * (-((hour - 19.0) / 2.0).powi(2)).exp()
                        + rng.gen_range(-150.0..150.0)
                })
                .collect();
            (first + chrono::Days::new(i as u64), series)
        })
        .collect();

    let label_one =
        |(date, series): &(NaiveDate, Vec<f64>)| extract_ramp(*date, series).unwrap();

    let mut group = c.benchmark_group("per_day_labeling");
    group.throughput(Throughput::Elements(DAYS as u64));
    group.bench_function("sequential", |b| {
        b.iter(|| exec::map_sequential(&days, label_one))
    });
    #[cfg(feature = "parallel")]
    group.bench_function("parallel", |b| {
        b.iter(|| exec::map_parallel(&days, label_one))
    });
    group.finish();
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = per_sample_gradients, per_day_labeling
}

criterion_main!(benches);
