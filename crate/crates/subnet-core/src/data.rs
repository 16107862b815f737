//! Synthetic datasets, stratified splitting, and CSV interchange.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::{self, salt};

/// Labeled classification samples: one input row per sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub inputs: Matrix,
    pub labels: Vec<usize>,
    pub class_count: usize,
}

impl Dataset {
    pub fn new(inputs: Matrix, labels: Vec<usize>, class_count: usize) -> Result<Self> {
        if inputs.rows() != labels.len() {
            return Err(Error::shape(format!(
                "{} input rows vs {} labels",
                inputs.rows(),
                labels.len()
            )));
        }
        if labels.is_empty() {
            return Err(Error::config("dataset must not be empty"));
        }
        if labels.iter().any(|&l| l >= class_count) {
            return Err(Error::config("label out of class range"));
        }
        Ok(Self {
            inputs,
            labels,
            class_count,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.cols()
    }

    /// Rows of this dataset at `indices`, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        let dim = self.input_dim();
        let mut data = Vec::with_capacity(indices.len() * dim);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            data.extend_from_slice(self.inputs.row(i));
            labels.push(self.labels[i]);
        }
        Dataset::new(Matrix::new(indices.len(), dim, data)?, labels, self.class_count)
    }
}

/// Two interleaved spiral arms, one class each, balanced to within one
/// sample. Points sit on `r = t, angle = t * turns * pi + class * pi` for
/// `t` in [0.1, 1], with Gaussian positional noise.
pub fn spiral(n: usize, noise_sd: f64, turns: f64, seed: u64) -> Result<Dataset> {
    if n < 2 {
        return Err(Error::config("spiral needs n >= 2"));
    }
    let mut rng = rng::stream(seed, &[salt::DATA]);
    let noise = Normal::new(0.0, noise_sd.max(0.0)).map_err(|e| Error::config(e.to_string()))?;
    let counts = [n - n / 2, n / 2];
    let mut data = Vec::with_capacity(n * 2);
    let mut labels = Vec::with_capacity(n);
    for (class, &count) in counts.iter().enumerate() {
        for i in 0..count {
            let frac = if count > 1 {
                i as f64 / (count - 1) as f64
            } else {
                0.0
            };
            let t = 0.1 + 0.9 * frac;
            let angle = t * turns * std::f64::consts::PI + class as f64 * std::f64::consts::PI;
            let mut x = t * angle.cos();
            let mut y = t * angle.sin();
            if noise_sd > 0.0 {
                x += noise.sample(&mut rng);
                y += noise.sample(&mut rng);
            }
            data.push(x);
            data.push(y);
            labels.push(class);
        }
    }
    Dataset::new(Matrix::new(n, 2, data)?, labels, 2)
}

/// `k` isotropic unit-variance Gaussian clusters centered on a circle of
/// radius `separation`; class sizes balanced to within one.
pub fn gaussian_blobs(k: usize, n: usize, separation: f64, seed: u64) -> Result<Dataset> {
    if k < 2 {
        return Err(Error::config("gaussian_blobs needs k >= 2"));
    }
    if n < k {
        return Err(Error::config("gaussian_blobs needs n >= k"));
    }
    let mut rng = rng::stream(seed, &[salt::DATA]);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut data = Vec::with_capacity(n * 2);
    let mut labels = Vec::with_capacity(n);
    for class in 0..k {
        let count = n / k + usize::from(class < n % k);
        let angle = 2.0 * std::f64::consts::PI * class as f64 / k as f64;
        let (cx, cy) = (separation * angle.cos(), separation * angle.sin());
        for _ in 0..count {
            data.push(cx + normal.sample(&mut rng));
            data.push(cy + normal.sample(&mut rng));
            labels.push(class);
        }
    }
    Dataset::new(Matrix::new(n, 2, data)?, labels, k)
}

/// Stratified split into parts proportional to `fractions` (non-negative,
/// summing to 1). Per-class counts land within one sample of exact
/// proportionality; a positive fraction that would receive zero samples is
/// an error, while an exactly-zero fraction yields an intentionally empty
/// part.
pub fn split_n(ds: &Dataset, fractions: &[f64], seed: u64) -> Result<Vec<Option<Dataset>>> {
    if fractions.is_empty() {
        return Err(Error::config("need at least one fraction"));
    }
    if fractions.iter().any(|&f| f < 0.0) {
        return Err(Error::config("fractions must be non-negative"));
    }
    let sum: f64 = fractions.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::config(format!("fractions sum to {sum}, expected 1")));
    }

    let mut per_split_indices: Vec<Vec<usize>> = vec![Vec::new(); fractions.len()];
    for class in 0..ds.class_count {
        let mut idx: Vec<usize> = (0..ds.len()).filter(|&i| ds.labels[i] == class).collect();
        // Fisher-Yates with a per-class stream.
        let mut rng = rng::stream(seed, &[salt::SPLIT, class as u64]);
        for i in (1..idx.len()).rev() {
            let j = rng.gen_range(0..=i);
            idx.swap(i, j);
        }
        // Largest-remainder allocation of this class across splits.
        let n_c = idx.len();
        let mut counts: Vec<usize> = fractions
            .iter()
            .map(|f| (f * n_c as f64).floor() as usize)
            .collect();
        let assigned: usize = counts.iter().sum();
        // Ties rotate their starting split with the class index, so e.g. a
        // 50/50 split of two equal classes lands on exact halves overall.
        let k = fractions.len();
        let mut remainders: Vec<(usize, f64)> = fractions
            .iter()
            .enumerate()
            .map(|(i, f)| (i, f * n_c as f64 - counts[i] as f64))
            .collect();
        remainders.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .unwrap()
                .then(((a.0 + class) % k).cmp(&((b.0 + class) % k)))
        });
        for &(i, _) in remainders.iter().take(n_c - assigned) {
            counts[i] += 1;
        }
        let mut cursor = 0;
        for (split, &count) in counts.iter().enumerate() {
            per_split_indices[split].extend_from_slice(&idx[cursor..cursor + count]);
            cursor += count;
        }
    }

    let mut out = Vec::with_capacity(fractions.len());
    for (split, mut indices) in per_split_indices.into_iter().enumerate() {
        if indices.is_empty() {
            if fractions[split] > 0.0 {
                return Err(Error::config(format!(
                    "fraction {} yields an empty split",
                    fractions[split]
                )));
            }
            out.push(None);
        } else {
            indices.sort_unstable();
            out.push(Some(ds.subset(&indices)?));
        }
    }
    Ok(out)
}

/// Three-way `(train, val, test)` split; zero fractions produce empty parts
/// only when exactly zero.
pub fn split(
    ds: &Dataset,
    fractions: (f64, f64, f64),
    seed: u64,
) -> Result<(Dataset, Option<Dataset>, Option<Dataset>)> {
    let parts = split_n(ds, &[fractions.0, fractions.1, fractions.2], seed)?;
    let mut it = parts.into_iter();
    let train = it
        .next()
        .flatten()
        .ok_or_else(|| Error::config("train fraction yields an empty split"))?;
    Ok((train, it.next().flatten(), it.next().flatten()))
}

/// Write `header f0..f{d-1},label`, one sample per row, label last.
pub fn save_csv(ds: &Dataset, path: &Path) -> Result<()> {
    let mut out = String::new();
    let dim = ds.input_dim();
    for j in 0..dim {
        let _ = write!(out, "f{j},");
    }
    out.push_str("label\n");
    for i in 0..ds.len() {
        for v in ds.inputs.row(i) {
            let _ = write!(out, "{v},");
        }
        let _ = writeln!(out, "{}", ds.labels[i]);
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn load_csv(path: &Path) -> Result<Dataset> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::Format("empty csv".into()))?;
    let dim = header.split(',').count().saturating_sub(1);
    if dim == 0 {
        return Err(Error::Format("csv needs at least one feature column".into()));
    }
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for (lineno, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != dim + 1 {
            return Err(Error::Format(format!(
                "line {}: expected {} fields, got {}",
                lineno + 1,
                dim + 1,
                fields.len()
            )));
        }
        for f in &fields[..dim] {
            data.push(f.trim().parse::<f64>().map_err(|e| {
                Error::Format(format!("line {}: bad number {f:?}: {e}", lineno + 1))
            })?);
        }
        labels.push(fields[dim].trim().parse::<usize>().map_err(|e| {
            Error::Format(format!("line {}: bad label: {e}", lineno + 1))
        })?);
    }
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    let rows = labels.len();
    Dataset::new(Matrix::new(rows, dim, data)?, labels, classes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spiral_is_balanced_and_deterministic() {
        let ds = spiral(2500, 0.05, 2.5, 9).unwrap();
        let ones = ds.labels.iter().filter(|&&l| l == 1).count();
        assert_eq!(ones, 1250);
        assert_eq!(ds.len(), 2500);
        let again = spiral(2500, 0.05, 2.5, 9).unwrap();
        assert_eq!(ds, again);
        assert_ne!(ds, spiral(2500, 0.05, 2.5, 10).unwrap());
    }

    #[test]
    fn noiseless_spiral_sits_on_the_arms() {
        let ds = spiral(101, 0.0, 3.0, 4).unwrap();
        for i in 0..ds.len() {
            let (x, y) = (ds.inputs.get(i, 0), ds.inputs.get(i, 1));
            let r = (x * x + y * y).sqrt();
            // Radius equals t; check the point regenerates from (r, class).
            let angle = r * 3.0 * std::f64::consts::PI
                + ds.labels[i] as f64 * std::f64::consts::PI;
            assert!((x - r * angle.cos()).abs() < 1e-9);
            assert!((y - r * angle.sin()).abs() < 1e-9);
        }
    }

    #[test]
    fn blobs_are_balanced_and_separable() {
        let ds = gaussian_blobs(3, 300, 10.0, 7).unwrap();
        for class in 0..3 {
            assert_eq!(ds.labels.iter().filter(|&&l| l == class).count(), 100);
        }
        // With separation >> sigma a nearest-center rule is near-perfect.
        let mut correct = 0;
        for i in 0..ds.len() {
            let (x, y) = (ds.inputs.get(i, 0), ds.inputs.get(i, 1));
            let mut best = (f64::INFINITY, 0usize);
            for class in 0..3 {
                let a = 2.0 * std::f64::consts::PI * class as f64 / 3.0;
                let (cx, cy) = (10.0 * a.cos(), 10.0 * a.sin());
                let d = (x - cx).powi(2) + (y - cy).powi(2);
                if d < best.0 {
                    best = (d, class);
                }
            }
            correct += usize::from(best.1 == ds.labels[i]);
        }
        assert!(correct as f64 / ds.len() as f64 > 0.99);
    }

    #[test]
    fn blobs_one_point_per_class() {
        let ds = gaussian_blobs(4, 4, 5.0, 1).unwrap();
        let mut counts = [0usize; 4];
        for &l in &ds.labels {
            counts[l] += 1;
        }
        assert_eq!(counts, [1, 1, 1, 1]);
    }

    #[test]
    fn split_all_train() {
        let ds = spiral(100, 0.1, 2.0, 1).unwrap();
        let (train, val, test) = split(&ds, (1.0, 0.0, 0.0), 5).unwrap();
        assert_eq!(train.len(), 100);
        assert!(val.is_none() && test.is_none());
    }

    #[test]
    fn split_half_gives_exact_halves() {
        let ds = spiral(250, 0.1, 2.0, 1).unwrap();
        let parts = split_n(&ds, &[0.5, 0.5], 3).unwrap();
        let a = parts[0].as_ref().unwrap();
        let b = parts[1].as_ref().unwrap();
        assert_eq!(a.len(), 125);
        assert_eq!(b.len(), 125);
    }

    #[test]
    fn split_is_a_partition() {
        let ds = spiral(173, 0.1, 2.0, 1).unwrap();
        let (train, val, test) = split(&ds, (0.6, 0.2, 0.2), 11).unwrap();
        let (val, test) = (val.unwrap(), test.unwrap());
        assert_eq!(train.len() + val.len() + test.len(), 173);
        // Disjointness: count input-row occurrences across parts.
        let key = |m: &Matrix, i: usize| format!("{:?}", m.row(i));
        let mut seen = std::collections::HashSet::new();
        for part in [&train, &val, &test] {
            for i in 0..part.len() {
                assert!(seen.insert(key(&part.inputs, i)), "duplicate row across splits");
            }
        }
    }

    #[test]
    fn split_is_stratified_on_unbalanced_classes() {
        // 3 classes with sizes 60 / 30 / 10.
        let mut data = Vec::new();
        let mut labels = Vec::new();
        for (class, count) in [(0usize, 60usize), (1, 30), (2, 10)] {
            for i in 0..count {
                data.extend_from_slice(&[class as f64, i as f64]);
                labels.push(class);
            }
        }
        let ds = Dataset::new(Matrix::new(100, 2, data).unwrap(), labels, 3).unwrap();
        let parts = split_n(&ds, &[0.5, 0.5], 2).unwrap();
        for part in parts.iter().map(|p| p.as_ref().unwrap()) {
            for (class, expect) in [(0usize, 30.0), (1, 15.0), (2, 5.0)] {
                let got = part.labels.iter().filter(|&&l| l == class).count() as f64;
                assert!(
                    (got - expect).abs() <= 1.0,
                    "class {class}: {got} vs {expect}"
                );
            }
        }
    }

    #[test]
    fn split_rejects_starved_positive_fraction() {
        let ds = spiral(4, 0.1, 2.0, 1).unwrap();
        assert!(split_n(&ds, &[0.9, 0.05, 0.05], 1).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let ds = gaussian_blobs(3, 30, 4.0, 2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ds.csv");
        save_csv(&ds, &path).unwrap();
        let back = load_csv(&path).unwrap();
        assert_eq!(back.labels, ds.labels);
        assert_eq!(back.class_count, ds.class_count);
        for i in 0..ds.len() {
            for j in 0..2 {
                assert!((back.inputs.get(i, j) - ds.inputs.get(i, j)).abs() < 1e-12);
            }
        }
    }
}
