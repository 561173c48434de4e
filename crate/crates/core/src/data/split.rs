use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::DomainDataset;
use crate::error::{FudaError, Result};

/// Seeded split into `(first, second)` with `round(N * fraction)` samples
/// in `first`. Labeled datasets are stratified: each class contributes
/// within one sample of its proportional share to either half.
pub fn split(ds: &DomainDataset, fraction: f64, seed: u64) -> Result<(DomainDataset, DomainDataset)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(FudaError::invalid(format!("split fraction {fraction} outside (0, 1)")));
    }
    let n = ds.len();
    let first_len = (n as f64 * fraction).round() as usize;
    if first_len == 0 || first_len == n {
        return Err(FudaError::invalid(format!(
            "splitting {n} samples at {fraction} leaves one side empty"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let groups: Vec<Vec<usize>> = match ds.labels() {
        Some(labels) => {
            let mut g = vec![Vec::new(); ds.num_classes()];
            for (i, &y) in labels.iter().enumerate() {
                g[y].push(i);
            }
            g
        }
        None => vec![(0..n).collect()],
    };

    // Largest-remainder apportionment of first_len across groups.
    let quotas: Vec<f64> = groups
        .iter()
        .map(|g| g.len() as f64 * first_len as f64 / n as f64)
        .collect();
    let mut take: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let mut remaining = first_len - take.iter().sum::<usize>();
    let mut by_remainder: Vec<usize> = (0..groups.len()).collect();
    by_remainder.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &g in &by_remainder {
        if remaining == 0 {
            break;
        }
        if take[g] < groups[g].len() {
            take[g] += 1;
            remaining -= 1;
        }
    }

    let mut first = Vec::with_capacity(first_len);
    let mut second = Vec::with_capacity(n - first_len);
    for (mut group, k) in groups.into_iter().zip(take) {
        group.shuffle(&mut rng);
        second.extend_from_slice(&group[k..]);
        group.truncate(k);
        first.extend(group);
    }
    first.shuffle(&mut rng);
    second.shuffle(&mut rng);
    Ok((ds.subset(&first), ds.subset(&second)))
}
