use crate::survival::SurvivalLabel;

/// Fenwick tree over risk ranks.
struct Fenwick(Vec<usize>);

impl Fenwick {
    fn add(&mut self, mut i: usize) {
        i += 1;
        while i < self.0.len() {
            self.0[i] += 1;
            i += i & i.wrapping_neg();
        }
    }

    /// Count of inserted ranks `< i`.
    fn below(&self, mut i: usize) -> usize {
        let mut s = 0;
        while i > 0 {
            s += self.0[i];
            i &= i - 1;
        }
        s
    }
}

/// Harrell's concordance index.
///
/// A pair `(i, j)` is comparable when `i` died and `t_i < t_j`. It counts 1
/// when `risk_i > risk_j` and 0.5 on a risk tie. Returns `None` when no pair
/// is comparable. Runs in `O(n log n)`.
pub fn concordance_index(risks: &[f64], labels: &[SurvivalLabel]) -> Option<f64> {
    assert_eq!(risks.len(), labels.len(), "one risk per label");
    let n = risks.len();
    // Dense ranks of risks, ties sharing a rank.
    let mut sorted: Vec<f64> = risks.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    let rank = |r: f64| sorted.partition_point(|&x| x < r);

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| labels[b].t.total_cmp(&labels[a].t));

    // Walk from the longest time down; the tree holds strictly later samples.
    let mut tree = Fenwick(vec![0; sorted.len() + 1]);
    let (mut concordant, mut ties, mut comparable) = (0usize, 0usize, 0usize);
    let mut inserted = 0usize;
    let mut g = 0;
    while g < n {
        let mut end = g;
        while end + 1 < n && labels[order[end + 1]].t == labels[order[g]].t {
            end += 1;
        }
        for &i in &order[g..=end] {
            if labels[i].event {
                let r = rank(risks[i]);
                let lower = tree.below(r);
                let tied = tree.below(r + 1) - lower;
                concordant += lower;
                ties += tied;
                comparable += inserted;
            }
        }
        for &i in &order[g..=end] {
            tree.add(rank(risks[i]));
            inserted += 1;
        }
        g = end + 1;
    }
    (comparable > 0).then(|| (concordant as f64 + 0.5 * ties as f64) / comparable as f64)
}

/// Fixed-horizon AUC: cases died at or before `horizon`, controls survived
/// past it, and samples censored at or before it are excluded. Risk ties
/// count one half. `None` if either class is empty.
pub fn binary_auc(risks: &[f64], labels: &[SurvivalLabel], horizon: f64) -> Option<f64> {
    assert_eq!(risks.len(), labels.len(), "one risk per label");
    let mut kept = Vec::new();
    let mut is_case = Vec::new();
    for (r, l) in risks.iter().zip(labels) {
        if l.t <= horizon {
            if l.event {
                kept.push(*r);
                is_case.push(true);
            }
        } else {
            kept.push(*r);
            is_case.push(false);
        }
    }
    let n1 = is_case.iter().filter(|&&c| c).count();
    let n0 = is_case.len() - n1;
    if n1 == 0 || n0 == 0 {
        return None;
    }
    let rk = ranks(&kept);
    let rank_sum: f64 = rk.iter().zip(&is_case).filter(|(_, &c)| c).map(|(r, _)| r).sum();
    let u = rank_sum - (n1 * (n1 + 1)) as f64 / 2.0;
    Some(u / (n1 * n0) as f64)
}

/// Median split of a cohort by predicted risk.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskGroups {
    pub threshold: f64,
    /// Indices with risk at or below the median.
    pub low: Vec<usize>,
    /// Indices with risk strictly above the median.
    pub high: Vec<usize>,
}

impl RiskGroups {
    pub fn pick<T: Copy>(&self, items: &[T]) -> (Vec<T>, Vec<T>) {
        (self.low.iter().map(|&i| items[i]).collect(), self.high.iter().map(|&i| items[i]).collect())
    }
}

/// Splits at the median risk; ties at the median go to the low group.
pub fn stratify(risks: &[f64]) -> RiskGroups {
    let mut sorted = risks.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let threshold = if n == 0 {
        0.0
    } else if n % 2 == 1 {
        sorted[n / 2]
    } else {
        let (a, b) = (sorted[n / 2 - 1], sorted[n / 2]);
        // Midpoint, but never strictly above an equal pair.
        if a == b { a } else { a + (b - a) / 2.0 }
    };
    let (low, high) = (0..n).partition(|&i| risks[i] <= threshold);
    RiskGroups { threshold, low, high }
}

/// Average ranks (1-based) with ties sharing their mean rank.
pub fn ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let mean_rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = mean_rank;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation; `NaN` when either side is constant.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    let (ra, rb) = (ranks(a), ranks(b));
    let n = ra.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}
