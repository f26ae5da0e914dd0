//! Histogram CART regression tree. On 0/1 targets the squared-error
//! decrease is twice the Gini decrease, so classification forests reuse it.

use rand::seq::SliceRandom;
use rand::Rng;

use super::Matrix;

pub const MAX_BINS: usize = 256;

/// Feature values quantized to at most `MAX_BINS` ordered codes per column.
#[derive(Debug, Clone)]
pub struct Binned {
    n: usize,
    codes: Vec<u8>,
    cuts: Vec<Vec<f64>>,
}

fn make_cuts(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v.dedup();
    let m = v.len();
    if m <= 1 {
        return Vec::new();
    }
    if m <= MAX_BINS {
        return v.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    }
    let mut cuts: Vec<f64> = (1..MAX_BINS)
        .map(|q| {
            let k = q * m / MAX_BINS;
            0.5 * (v[k - 1] + v[k])
        })
        .collect();
    cuts.dedup();
    cuts
}

impl Binned {
    pub fn new(x: &Matrix) -> Self {
        let n = x.rows();
        let d = x.cols();
        let mut codes = vec![0u8; n * d];
        let mut cuts = Vec::with_capacity(d);
        for j in 0..d {
            let col = x.column(j);
            let c = make_cuts(col.clone());
            for (i, v) in col.iter().enumerate() {
                codes[j * n + i] = c.partition_point(|t| t < v) as u8;
            }
            cuts.push(c);
        }
        Self { n, codes, cuts }
    }

    pub fn features(&self) -> usize {
        self.cuts.len()
    }

    pub fn rows(&self) -> usize {
        self.n
    }

    fn code(&self, j: usize, i: usize) -> usize {
        usize::from(self.codes[j * self.n + i])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Node {
    Leaf(f64),
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionTree {
    pub nodes: Vec<Node>,
}

impl RegressionTree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut k = 0;
        loop {
            match self.nodes[k] {
                Node::Leaf(v) => return v,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => k = if x[feature] <= threshold { left } else { right },
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct TreeParams {
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    /// Features examined per split; `None` examines all.
    pub mtry: Option<usize>,
}

struct Best {
    feature: usize,
    code: usize,
    gain: f64,
}

/// Grows a tree on `rows` (duplicates allowed, e.g. a bootstrap sample).
/// Squared-error decreases are added to `importance` per feature.
pub fn fit_tree<R: Rng>(
    data: &Binned,
    y: &[f64],
    rows: Vec<u32>,
    params: &TreeParams,
    rng: &mut R,
    importance: &mut [f64],
) -> RegressionTree {
    let d = data.features();
    let mtry = params.mtry.unwrap_or(d).clamp(1, d.max(1));
    let mut nodes = vec![Node::Leaf(0.0)];
    // (node slot, rows, depth)
    let mut stack = vec![(0usize, rows, 0usize)];
    let mut order: Vec<usize> = (0..d).collect();
    let mut sum = [0.0f64; MAX_BINS];
    let mut cnt = [0u32; MAX_BINS];
    while let Some((slot, idx, depth)) = stack.pop() {
        let n = idx.len() as f64;
        let total: f64 = idx.iter().map(|&i| y[i as usize]).sum();
        let mean = total / n;
        let sse: f64 = idx.iter().map(|&i| (y[i as usize] - mean).powi(2)).sum();
        let depth_ok = params.max_depth.is_none_or(|m| depth < m);
        if !depth_ok || idx.len() < 2 * params.min_leaf.max(1) || sse <= 1e-14 * n {
            nodes[slot] = Node::Leaf(mean);
            continue;
        }
        order.shuffle(rng);
        let mut best: Option<Best> = None;
        let mut visited = 0;
        for &f in &order {
            if visited >= mtry {
                break;
            }
            let nb = data.cuts[f].len() + 1;
            if nb < 2 {
                continue;
            }
            sum[..nb].fill(0.0);
            cnt[..nb].fill(0);
            for &i in &idx {
                let c = data.code(f, i as usize);
                sum[c] += y[i as usize];
                cnt[c] += 1;
            }
            if cnt[..nb].iter().filter(|&&c| c > 0).count() < 2 {
                continue;
            }
            visited += 1;
            let base = total * total / n;
            let (mut sl, mut nl) = (0.0, 0u32);
            for c in 0..nb - 1 {
                sl += sum[c];
                nl += cnt[c];
                let nr = idx.len() as u32 - nl;
                if (nl as usize) < params.min_leaf || (nr as usize) < params.min_leaf {
                    continue;
                }
                if cnt[c] == 0 {
                    continue;
                }
                let sr = total - sl;
                let gain = sl * sl / f64::from(nl) + sr * sr / f64::from(nr) - base;
                if gain > best.as_ref().map_or(1e-12, |b| b.gain) {
                    best = Some(Best {
                        feature: f,
                        code: c,
                        gain,
                    });
                }
            }
        }
        let Some(b) = best else {
            nodes[slot] = Node::Leaf(mean);
            continue;
        };
        importance[b.feature] += b.gain;
        let (left, right): (Vec<u32>, Vec<u32>) = idx
            .into_iter()
            .partition(|&i| data.code(b.feature, i as usize) <= b.code);
        let l = nodes.len();
        nodes.push(Node::Leaf(0.0));
        nodes.push(Node::Leaf(0.0));
        nodes[slot] = Node::Split {
            feature: b.feature,
            threshold: data.cuts[b.feature][b.code],
            left: l,
            right: l + 1,
        };
        stack.push((l + 1, right, depth + 1));
        stack.push((l, left, depth + 1));
    }
    RegressionTree { nodes }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn cuts_are_midpoints() {
        assert_eq!(make_cuts(vec![3.0, 1.0, 2.0, 2.0]), vec![1.5, 2.5]);
        assert!(make_cuts(vec![1.0; 4]).is_empty());
        let many: Vec<f64> = (0..1000).map(f64::from).collect();
        assert!(make_cuts(many).len() < MAX_BINS);
    }

    #[test]
    fn fits_a_step() {
        let x = Matrix::new(6, 1, vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        let y = [0.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        let b = Binned::new(&x);
        let mut imp = vec![0.0];
        let params = TreeParams {
            max_depth: None,
            min_leaf: 1,
            mtry: None,
        };
        let t = fit_tree(&b, &y, (0..6).collect(), &params, &mut ChaCha8Rng::seed_from_u64(1), &mut imp);
        assert_eq!(t.nodes.len(), 3);
        assert_eq!(t.predict(&[2.4]), 0.0);
        assert_eq!(t.predict(&[2.6]), 1.0);
        assert!((imp[0] - 1.5).abs() < 1e-12);
    }
}
