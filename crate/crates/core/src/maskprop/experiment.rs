use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use super::{generate_irregular_mask, propagate_packed, LayerStackSpec, PackedMask};
use crate::error::{Error, Result};
use crate::tensor::BinaryMask;

/// Generated masks whose measured ratio misses the bucket are regenerated
/// up to this many times.
const MAX_BUCKET_ATTEMPTS: u64 = 64;

#[derive(Clone, Debug, PartialEq)]
pub struct MaskExperimentConfig {
    pub mask_count: usize,
    /// Half-open `[lo, hi)` hole-ratio ranges.
    pub buckets: Vec<(f64, f64)>,
    pub per_bucket: usize,
    pub cap: usize,
    pub height: usize,
    pub width: usize,
    pub seed: u64,
}

impl Default for MaskExperimentConfig {
    fn default() -> Self {
        let buckets: Vec<(f64, f64)> = (0..6).map(|i| (i as f64 / 10.0, (i + 1) as f64 / 10.0)).collect();
        Self {
            mask_count: 12_000,
            per_bucket: 2_000,
            buckets,
            cap: 20,
            height: 256,
            width: 256,
            seed: 2020,
        }
    }
}

impl MaskExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.buckets.is_empty() {
            return Err(Error::invalid("at least one ratio bucket is required"));
        }
        if self.per_bucket * self.buckets.len() != self.mask_count {
            return Err(Error::invalid(format!(
                "per_bucket ({}) x buckets ({}) must equal mask_count ({})",
                self.per_bucket,
                self.buckets.len(),
                self.mask_count
            )));
        }
        if self.cap == 0 {
            return Err(Error::invalid("cap must be >= 1"));
        }
        for &(lo, hi) in &self.buckets {
            if !(0.0..1.0).contains(&lo) || hi <= lo || hi > 1.0 {
                return Err(Error::invalid(format!("bad ratio bucket [{lo}, {hi})")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BucketRow {
    pub stack: String,
    pub bucket_lo: f64,
    pub bucket_hi: f64,
    /// Mean layers-to-transparency with unreached masks counted as the cap.
    pub mean_layers: f64,
    pub min_layers: usize,
    pub max_layers: usize,
    pub not_reached: usize,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentSummary {
    pub rows: Vec<BucketRow>,
}

pub const CSV_HEADER: &str = "stack,bucket_lo,bucket_hi,mean_layers,min_layers,max_layers,not_reached";

impl ExperimentSummary {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{:.2},{:.2},{:.2},{},{},{}",
                r.stack, r.bucket_lo, r.bucket_hi, r.mean_layers, r.min_layers, r.max_layers, r.not_reached
            );
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn rows_for<'a>(&'a self, stack: &'a str) -> impl Iterator<Item = &'a BucketRow> + 'a {
        self.rows.iter().filter(move |r| r.stack == stack)
    }

    /// Count-weighted mean over all buckets of one stack.
    pub fn overall_mean(&self, stack: &str) -> Option<f64> {
        let (sum, n) = self
            .rows_for(stack)
            .fold((0.0, 0usize), |(s, n), r| (s + r.mean_layers * r.count as f64, n + r.count));
        (n > 0).then(|| sum / n as f64)
    }
}

#[derive(Clone, Copy)]
struct Acc {
    sum: usize,
    min: usize,
    max: usize,
    not_reached: usize,
    count: usize,
}

impl Acc {
    fn new() -> Self {
        Self {
            sum: 0,
            min: usize::MAX,
            max: 0,
            not_reached: 0,
            count: 0,
        }
    }

    fn push(&mut self, layers: Option<usize>, cap: usize) {
        let v = layers.unwrap_or(cap);
        self.sum += v;
        self.min = self.min.min(v);
        self.max = self.max.max(v);
        self.not_reached += usize::from(layers.is_none());
        self.count += 1;
    }
}

fn check_stacks(stacks: &[LayerStackSpec], h: usize, w: usize, cap: usize) -> Result<()> {
    if stacks.len() < 2 {
        return Err(Error::invalid("the experiment compares at least two stacks"));
    }
    for s in stacks {
        if s.layers.is_empty() {
            return Err(Error::invalid(format!("layer stack '{}' is empty", s.name)));
        }
        // strided stacks may legitimately shrink below the kernel before the
        // cap; those are reported when reached
        if s.layers.iter().all(|l| l.stride == 1) {
            s.validate_for(h, w, cap.min(s.layers.len()))?;
        }
    }
    Ok(())
}

fn summarize(
    buckets: &[(f64, f64)],
    stacks: &[LayerStackSpec],
    cap: usize,
    results: impl IntoIterator<Item = (usize, Vec<Option<usize>>)>,
) -> Result<ExperimentSummary> {
    let mut acc = vec![vec![Acc::new(); buckets.len()]; stacks.len()];
    for (bucket, layers) in results {
        for (s, l) in layers.into_iter().enumerate() {
            acc[s][bucket].push(l, cap);
        }
    }
    let mut rows = Vec::with_capacity(stacks.len() * buckets.len());
    for (s, stack) in stacks.iter().enumerate() {
        for (b, &(lo, hi)) in buckets.iter().enumerate() {
            let a = acc[s][b];
            if a.count == 0 {
                return Err(Error::invalid(format!("ratio bucket [{lo:.2}, {hi:.2}) received no masks")));
            }
            rows.push(BucketRow {
                stack: stack.name.clone(),
                bucket_lo: lo,
                bucket_hi: hi,
                mean_layers: a.sum as f64 / a.count as f64,
                min_layers: a.min,
                max_layers: a.max,
                not_reached: a.not_reached,
                count: a.count,
            });
        }
    }
    Ok(ExperimentSummary { rows })
}

fn layers_for_all(stacks: &[LayerStackSpec], mask: &BinaryMask, cap: usize) -> Result<Vec<Option<usize>>> {
    let packed = PackedMask::from_mask(mask);
    stacks
        .iter()
        .map(|s| propagate_packed(s, &packed, cap).map(|r| r.layers_to_transparency))
        .collect()
}

fn bucket_of(buckets: &[(f64, f64)], ratio: f64) -> Option<usize> {
    buckets.iter().position(|&(lo, hi)| ratio >= lo && ratio < hi)
}

/// Runs every stack on caller-provided masks, bucketed by measured hole
/// ratio. Masks outside every bucket are skipped.
pub fn run_on_masks(
    buckets: &[(f64, f64)],
    masks: &[BinaryMask],
    stacks: &[LayerStackSpec],
    cap: usize,
) -> Result<ExperimentSummary> {
    let first = masks.first().ok_or_else(|| Error::invalid("no masks given"))?;
    check_stacks(stacks, first.height(), first.width(), cap)?;
    let results: Vec<(usize, Vec<Option<usize>>)> = masks
        .par_iter()
        .filter_map(|m| bucket_of(buckets, m.ratio()).map(|b| (b, m)))
        .map(|(b, m)| layers_for_all(stacks, m, cap).map(|l| (b, l)))
        .collect::<Result<_>>()?;
    summarize(buckets, stacks, cap, results)
}

fn mask_seed(seed: u64, bucket: usize, index: usize, attempt: u64) -> u64 {
    // splitmix64 over the packed coordinates
    let mut z = seed
        ^ (bucket as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (index as u64).wrapping_mul(0xBF58_476D_1CE4_E5B9)
        ^ attempt.wrapping_mul(0x94D0_49BB_1331_11EB);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generates one mask whose measured ratio falls in `[lo, hi)`.
pub(crate) fn bucket_mask(config: &MaskExperimentConfig, bucket: usize, index: usize) -> Result<BinaryMask> {
    let (lo, hi) = config.buckets[bucket];
    let mut last_err = None;
    for attempt in 0..MAX_BUCKET_ATTEMPTS {
        let seed = mask_seed(config.seed, bucket, index, attempt);
        let u = (seed >> 11) as f64 / (1u64 << 53) as f64;
        let span = hi.min(0.89) - lo;
        let target = (lo + span * (0.05 + 0.9 * u)).max(1e-3);
        match generate_irregular_mask(config.height, config.width, target, seed) {
            Ok(m) if m.ratio() >= lo && m.ratio() < hi => return Ok(m),
            Ok(_) => {}
            Err(e) => last_err = Some(e),
        }
    }
    Err(last_err.unwrap_or_else(|| {
        Error::invalid(format!("could not generate a mask with ratio in [{lo}, {hi})"))
    }))
}

/// Generates `per_bucket` masks per ratio bucket and reports, per stack and
/// bucket, the statistics of layers needed to reach a hole-free mask.
/// Results depend only on the configuration, not on thread scheduling.
pub fn run_transparency_experiment(config: &MaskExperimentConfig, stacks: &[LayerStackSpec]) -> Result<ExperimentSummary> {
    config.validate()?;
    check_stacks(stacks, config.height, config.width, config.cap)?;
    let jobs: Vec<(usize, usize)> = (0..config.buckets.len())
        .flat_map(|b| (0..config.per_bucket).map(move |i| (b, i)))
        .collect();
    let results: Vec<(usize, Vec<Option<usize>>)> = jobs
        .par_iter()
        .map(|&(b, i)| {
            let mask = bucket_mask(config, b, i)?;
            layers_for_all(stacks, &mask, config.cap).map(|l| (b, l))
        })
        .collect::<Result<_>>()?;
    summarize(&config.buckets, stacks, config.cap, results)
}
