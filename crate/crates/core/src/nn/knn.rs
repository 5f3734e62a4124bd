use alloc::vec::Vec;

use super::{FeatureGrid, NnError};

/// Neighbour table of shape `R × (k+1)`, row-major.
///
/// Entry 0 of row `i` is `i` itself; entries `1..=k` are the `k` nearest
/// other rows by Euclidean distance, ascending, ties to the lower index.
pub fn knn_neighborhoods(field: &FeatureGrid, k: usize) -> Result<Vec<usize>, NnError> {
    let r = field.rows();
    if k >= r {
        return Err(NnError::KTooLarge { k, rows: r });
    }
    let width = k + 1;
    let mut out = Vec::with_capacity(r * width);
    // full symmetric distance table, each pair evaluated once
    let mut dist = alloc::vec![0.0; r * r];
    for i in 0..r {
        let fi = field.row(i);
        for j in i + 1..r {
            let d = squared_distance(fi, field.row(j));
            dist[i * r + j] = d;
            dist[j * r + i] = d;
        }
    }
    // (distance², index), kept sorted; at most k entries
    let mut best: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
    for i in 0..r {
        best.clear();
        for (j, &d) in dist[i * r..(i + 1) * r].iter().enumerate() {
            if j == i {
                continue;
            }
            if best.len() == k && (k == 0 || !(d < best[k - 1].0)) {
                continue;
            }
            // j increases monotonically, so inserting after equal distances keeps lowest-index-first
            let pos = best.partition_point(|&(bd, _)| bd <= d);
            best.insert(pos, (d, j));
            best.truncate(k);
        }
        out.push(i);
        out.extend(best.iter().map(|&(_, j)| j));
    }
    Ok(out)
}

#[inline]
fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        for l in 0..4 {
            let d = a[4 * i + l] - b[4 * i + l];
            acc[l] += d * d;
        }
    }
    let mut tail = 0.0;
    for j in 4 * chunks..a.len() {
        tail += (a[j] - b[j]) * (a[j] - b[j]);
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}
