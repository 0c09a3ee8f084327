//! Sum-of-trees baseline: Bayesian backfitting with grow/prune moves.
//!
//! The baseline surface is `mu(w) = sum_t g(w; tree_t)`, each tree a binary
//! partition with constant leaf means. One sweep visits every tree in order:
//! form partial residuals against the other trees, propose grow or prune
//! (probability 1/2 each) on the structure, accept by Metropolis-Hastings on
//! the integrated likelihood (leaf means marginalized under their Gaussian
//! prior), then redraw all leaf means from their conjugate posteriors.
//!
//! The noise variance is owned by the surrounding sampler and passed in; the
//! ensemble never carries its own. Internally the outcome is centered and
//! scaled once at initialization, so the default leaf-prior scale
//! `sigma_mu = c / (k sqrt(m))` refers to a unit-variance outcome; fitted
//! values and predictions are mapped back to the original scale.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::math::LN_2PI;

/// Ensemble size and prior knobs. Defaults follow the reference settings
/// `(m, alpha, beta, k, c) = (200, 0.95, 2.0, 2.0, 1.0)`; `n_trees` can be
/// lowered (to 20 or so) for fast tests.
#[derive(Debug, Clone, Copy)]
pub struct TreeHyper {
    pub n_trees: usize,
    /// Split-probability base: P(split at depth d) = alpha (1+d)^-beta.
    pub alpha: f64,
    pub beta: f64,
    /// Leaf-prior shrinkage: sigma_mu = c / (k sqrt(n_trees)).
    pub k: f64,
    pub c: f64,
}

impl Default for TreeHyper {
    fn default() -> Self {
        TreeHyper {
            n_trees: 200,
            alpha: 0.95,
            beta: 2.0,
            k: 2.0,
            c: 1.0,
        }
    }
}

impl TreeHyper {
    pub fn with_n_trees(n_trees: usize) -> Self {
        TreeHyper {
            n_trees,
            ..TreeHyper::default()
        }
    }

    /// Depth-penalized split probability `alpha (1+d)^-beta`.
    pub fn p_split(&self, depth: u32) -> f64 {
        self.alpha * (1.0 + depth as f64).powf(-self.beta)
    }
}

#[derive(Debug, Clone)]
enum Node {
    Internal {
        var: usize,
        cut: f64,
        left: usize,
        right: usize,
        depth: u32,
    },
    Leaf {
        mean: f64,
        depth: u32,
    },
}

impl Node {
    fn depth(&self) -> u32 {
        match self {
            Node::Internal { depth, .. } | Node::Leaf { depth, .. } => *depth,
        }
    }

    fn is_leaf(&self) -> bool {
        matches!(self, Node::Leaf { .. })
    }
}

/// One decision tree in a slab arena with a free list; node 0 is the root.
#[derive(Debug, Clone)]
struct Tree {
    nodes: Vec<Node>,
    parent: Vec<usize>, // usize::MAX for the root
    free: Vec<usize>,
}

const NO_PARENT: usize = usize::MAX;

impl Tree {
    fn new_root() -> Self {
        Tree {
            nodes: vec![Node::Leaf {
                mean: 0.0,
                depth: 0,
            }],
            parent: vec![NO_PARENT],
            free: Vec::new(),
        }
    }

    fn live_ids(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.nodes.len()).filter(move |id| !self.free.contains(id))
    }

    fn leaf_ids(&self) -> Vec<usize> {
        self.live_ids()
            .filter(|&id| self.nodes[id].is_leaf())
            .collect()
    }

    /// Internal nodes whose children are both leaves.
    fn prunable_ids(&self) -> Vec<usize> {
        self.live_ids()
            .filter(|&id| match self.nodes[id] {
                Node::Internal { left, right, .. } => {
                    self.nodes[left].is_leaf() && self.nodes[right].is_leaf()
                }
                Node::Leaf { .. } => false,
            })
            .collect()
    }

    fn alloc(&mut self, node: Node, parent: usize) -> usize {
        if let Some(id) = self.free.pop() {
            self.nodes[id] = node;
            self.parent[id] = parent;
            id
        } else {
            self.nodes.push(node);
            self.parent.push(parent);
            self.nodes.len() - 1
        }
    }

    /// Split `leaf` on (var, cut); returns the two child ids.
    fn grow(&mut self, leaf: usize, var: usize, cut: f64) -> (usize, usize) {
        let depth = self.nodes[leaf].depth();
        debug_assert!(self.nodes[leaf].is_leaf());
        let left = self.alloc(
            Node::Leaf {
                mean: 0.0,
                depth: depth + 1,
            },
            leaf,
        );
        let right = self.alloc(
            Node::Leaf {
                mean: 0.0,
                depth: depth + 1,
            },
            leaf,
        );
        self.nodes[leaf] = Node::Internal {
            var,
            cut,
            left,
            right,
            depth,
        };
        (left, right)
    }

    /// Collapse a prunable internal node back into a leaf.
    fn prune(&mut self, id: usize) {
        let (left, right, depth) = match self.nodes[id] {
            Node::Internal {
                left, right, depth, ..
            } => (left, right, depth),
            Node::Leaf { .. } => unreachable!("prune target must be internal"),
        };
        debug_assert!(self.nodes[left].is_leaf() && self.nodes[right].is_leaf());
        self.free.push(left);
        self.free.push(right);
        self.nodes[id] = Node::Leaf { mean: 0.0, depth };
    }

    fn leaf_for_row(&self, w: &DMatrix<f64>, i: usize) -> usize {
        let mut id = 0;
        loop {
            match &self.nodes[id] {
                Node::Leaf { .. } => return id,
                Node::Internal {
                    var,
                    cut,
                    left,
                    right,
                    ..
                } => {
                    id = if w[(i, *var)] <= *cut { *left } else { *right };
                }
            }
        }
    }

    fn leaf_count(&self) -> usize {
        self.leaf_ids().len()
    }
}

/// Per-leaf sufficient statistics of the partial residuals.
#[derive(Debug, Clone, Default)]
struct LeafStats {
    n: f64,
    sum: f64,
    sumsq: f64,
    rows: Vec<usize>,
}

/// Log marginal likelihood of residuals in one leaf with the mean
/// integrated out under N(0, sigma_mu2) and noise variance sigma2.
fn leaf_log_marginal(n: f64, sum: f64, sumsq: f64, sigma2: f64, sigma_mu2: f64) -> f64 {
    let denom = sigma2 + n * sigma_mu2;
    -0.5 * n * (LN_2PI + sigma2.ln()) + 0.5 * (sigma2 / denom).ln()
        - (sumsq - sigma_mu2 * sum * sum / denom) / (2.0 * sigma2)
}

/// Log MH acceptance for a grow move. The split-rule probability is shared
/// between the tree prior and the proposal and cancels; what remains is the
/// integrated-likelihood ratio, the depth prior at the split and at the two
/// children (a child that cannot split contributes no stop factor), and the
/// leaf/prunable counting of the proposal.
fn log_accept_grow(
    hyper: &TreeHyper,
    depth: u32,
    delta_lik: f64,
    left_growable: bool,
    right_growable: bool,
    n_leaves: usize,
    n_prunable_after: usize,
) -> f64 {
    let p = hyper.p_split(depth);
    let child_stop = |growable: bool| {
        if growable {
            (1.0 - hyper.p_split(depth + 1)).ln()
        } else {
            0.0
        }
    };
    delta_lik + p.ln() - (1.0 - p).ln()
        + child_stop(left_growable)
        + child_stop(right_growable)
        + (n_leaves as f64).ln()
        - (n_prunable_after as f64).ln()
}

/// Log MH acceptance for a prune move: the exact reciprocal of the grow
/// acceptance for the reverse move.
fn log_accept_prune(
    hyper: &TreeHyper,
    depth: u32,
    delta_lik: f64,
    left_growable: bool,
    right_growable: bool,
    n_prunable: usize,
    n_leaves_after: usize,
) -> f64 {
    let p = hyper.p_split(depth);
    let child_stop = |growable: bool| {
        if growable {
            (1.0 - hyper.p_split(depth + 1)).ln()
        } else {
            0.0
        }
    };
    delta_lik + (1.0 - p).ln() - p.ln()
        - child_stop(left_growable)
        - child_stop(right_growable)
        + (n_prunable as f64).ln()
        - (n_leaves_after as f64).ln()
}

/// Sum-of-trees baseline, sampled by backfitting.
#[derive(Debug, Clone)]
pub struct TreeEnsemble {
    hyper: TreeHyper,
    trees: Vec<Tree>,
    /// Standardized per-tree fits on the training rows.
    tree_fits: Vec<DVector<f64>>,
    /// Standardized total fit on the training rows.
    total_fit: DVector<f64>,
    offset: f64,
    factor: f64,
    sigma_mu2: f64,
    n: usize,
    p: usize,
    grow_accepts: u64,
    prune_accepts: u64,
    holds: u64,
    proposals: u64,
}

impl TreeEnsemble {
    /// All trees start as root-only leaves at zero. The outcome offset and
    /// scale are frozen here: `y_dagger` is centered by its mean and scaled
    /// by its sample standard deviation (factor 1 when the outcome is
    /// essentially constant), and `sigma_mu = c/(k sqrt(m))` refers to the
    /// standardized scale.
    pub fn init(hyper: TreeHyper, w: &DMatrix<f64>, y_dagger: &DVector<f64>) -> Result<Self> {
        let n = w.nrows();
        let p = w.ncols();
        if hyper.n_trees == 0 {
            return Err(Error::invalid_argument("ensemble needs at least one tree"));
        }
        if n == 0 || p == 0 {
            return Err(Error::invalid_argument("tree baseline needs a nonempty design"));
        }
        if y_dagger.len() != n {
            return Err(Error::invalid_argument(format!(
                "outcome length {} does not match {} design rows",
                y_dagger.len(),
                n
            )));
        }
        let offset = y_dagger.mean();
        let sd = if n > 1 {
            (y_dagger.iter().map(|v| (v - offset).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        let factor = if sd < 1e-8 { 1.0 } else { sd };
        let sigma_mu = hyper.c / (hyper.k * (hyper.n_trees as f64).sqrt());
        Ok(TreeEnsemble {
            hyper,
            trees: (0..hyper.n_trees).map(|_| Tree::new_root()).collect(),
            tree_fits: vec![DVector::zeros(n); hyper.n_trees],
            total_fit: DVector::zeros(n),
            offset,
            factor,
            sigma_mu2: sigma_mu * sigma_mu,
            n,
            p,
            grow_accepts: 0,
            prune_accepts: 0,
            holds: 0,
            proposals: 0,
        })
    }

    pub fn n_trees(&self) -> usize {
        self.hyper.n_trees
    }

    /// (grow accepts, prune accepts, infeasible holds, total proposals).
    pub fn move_counts(&self) -> (u64, u64, u64, u64) {
        (self.grow_accepts, self.prune_accepts, self.holds, self.proposals)
    }

    pub fn mean_leaves_per_tree(&self) -> f64 {
        self.trees.iter().map(|t| t.leaf_count() as f64).sum::<f64>() / self.trees.len() as f64
    }

    /// Fitted baseline on the training rows, original outcome scale.
    pub fn fitted(&self) -> DVector<f64> {
        self.total_fit.map(|v| self.offset + self.factor * v)
    }

    /// Evaluate the ensemble on arbitrary rows, original outcome scale.
    pub fn predict(&self, w: &DMatrix<f64>) -> Result<DVector<f64>> {
        if w.ncols() != self.p {
            return Err(Error::invalid_argument(format!(
                "prediction design has {} columns, ensemble was built on {}",
                w.ncols(),
                self.p
            )));
        }
        Ok(DVector::from_fn(w.nrows(), |i, _| {
            let mut total = 0.0;
            for tree in &self.trees {
                let leaf = tree.leaf_for_row(w, i);
                if let Node::Leaf { mean, .. } = tree.nodes[leaf] {
                    total += mean;
                }
            }
            self.offset + self.factor * total
        }))
    }

    /// One backfitting sweep over all trees. `sigma2` is the noise variance
    /// on the original outcome scale, owned by the caller.
    pub fn backfit_sweep(
        &mut self,
        y_dagger: &DVector<f64>,
        w: &DMatrix<f64>,
        sigma2: f64,
        rng: &mut impl Rng,
    ) -> Result<()> {
        self.check_design(w, y_dagger)?;
        if !sigma2.is_finite() || sigma2 <= 0.0 {
            return Err(Error::invalid_argument(format!(
                "noise variance must be positive and finite, got {sigma2}"
            )));
        }
        let sigma2_std = sigma2 / (self.factor * self.factor);
        let y_std = y_dagger.map(|v| (v - self.offset) / self.factor);

        for t in 0..self.trees.len() {
            // Partial residuals against every other tree.
            let resid = &y_std - (&self.total_fit - &self.tree_fits[t]);
            let mut stats = self.collect_stats(t, w, &resid);
            let structure_changed = self.propose_move(t, w, &resid, &stats, sigma2_std, rng);
            if structure_changed {
                stats = self.collect_stats(t, w, &resid);
            }
            self.redraw_leaf_means(t, &stats, sigma2_std, rng);

            // Refresh this tree's cached fit and the running total.
            let tree = &self.trees[t];
            let fit = &mut self.tree_fits[t];
            for (leaf, st) in stats.iter().enumerate() {
                if st.rows.is_empty() {
                    continue;
                }
                if let Node::Leaf { mean, .. } = tree.nodes[leaf] {
                    for &i in &st.rows {
                        self.total_fit[i] += mean - fit[i];
                        fit[i] = mean;
                    }
                }
            }
        }

        // Incremental updates cannot drift: rebuild the total from the
        // per-tree caches once per sweep.
        self.total_fit.fill(0.0);
        for fit in &self.tree_fits {
            self.total_fit += fit;
        }
        Ok(())
    }

    fn check_design(&self, w: &DMatrix<f64>, y_dagger: &DVector<f64>) -> Result<()> {
        if w.nrows() != self.n || w.ncols() != self.p {
            return Err(Error::invalid_argument(format!(
                "design is {}x{}, ensemble was built on {}x{}",
                w.nrows(),
                w.ncols(),
                self.n,
                self.p
            )));
        }
        if y_dagger.len() != self.n {
            return Err(Error::invalid_argument(format!(
                "outcome length {} does not match {} rows",
                y_dagger.len(),
                self.n
            )));
        }
        Ok(())
    }

    /// Route every row through tree `t` and accumulate per-leaf residual
    /// statistics, indexed by node id.
    fn collect_stats(&self, t: usize, w: &DMatrix<f64>, resid: &DVector<f64>) -> Vec<LeafStats> {
        let tree = &self.trees[t];
        let mut stats = vec![LeafStats::default(); tree.nodes.len()];
        for i in 0..self.n {
            let leaf = tree.leaf_for_row(w, i);
            let st = &mut stats[leaf];
            st.n += 1.0;
            st.sum += resid[i];
            st.sumsq += resid[i] * resid[i];
            st.rows.push(i);
        }
        stats
    }

    /// Split variables with at least two distinct values among `rows`.
    fn feasible_vars(&self, w: &DMatrix<f64>, rows: &[usize]) -> Vec<usize> {
        (0..self.p)
            .filter(|&j| {
                let first = w[(rows[0], j)];
                rows.iter().any(|&i| w[(i, j)] != first)
            })
            .collect()
    }

    fn node_growable(&self, w: &DMatrix<f64>, rows: &[usize]) -> bool {
        !rows.is_empty() && !self.feasible_vars(w, rows).is_empty()
    }

    /// Distinct observed values of column `var` among `rows`, sorted, with
    /// the maximum removed: splitting at any of them leaves both children
    /// nonempty (left takes `<= cut`).
    fn cut_candidates(&self, w: &DMatrix<f64>, rows: &[usize], var: usize) -> Vec<f64> {
        let mut vals: Vec<f64> = rows.iter().map(|&i| w[(i, var)]).collect();
        vals.sort_by(f64::total_cmp);
        vals.dedup();
        vals.pop();
        vals
    }

    /// Returns true when the tree structure changed.
    fn propose_move(
        &mut self,
        t: usize,
        w: &DMatrix<f64>,
        resid: &DVector<f64>,
        stats: &[LeafStats],
        sigma2_std: f64,
        rng: &mut impl Rng,
    ) -> bool {
        self.proposals += 1;
        let grow_move = rng.random::<f64>() < 0.5;
        if grow_move {
            self.try_grow(t, w, resid, stats, sigma2_std, rng)
        } else {
            self.try_prune(t, w, stats, sigma2_std, rng)
        }
    }

    fn try_grow(
        &mut self,
        t: usize,
        w: &DMatrix<f64>,
        resid: &DVector<f64>,
        stats: &[LeafStats],
        sigma2_std: f64,
        rng: &mut impl Rng,
    ) -> bool {
        let leaves = self.trees[t].leaf_ids();
        let leaf = leaves[rng.random_range(0..leaves.len())];
        let rows = &stats[leaf].rows;
        if rows.is_empty() {
            self.holds += 1;
            return false;
        }
        let vars = self.feasible_vars(w, rows);
        if vars.is_empty() {
            self.holds += 1;
            return false;
        }
        let var = vars[rng.random_range(0..vars.len())];
        let cuts = self.cut_candidates(w, rows, var);
        debug_assert!(!cuts.is_empty());
        let cut = cuts[rng.random_range(0..cuts.len())];

        let mut left = LeafStats::default();
        let mut right = LeafStats::default();
        for &i in rows {
            let side = if w[(i, var)] <= cut { &mut left } else { &mut right };
            side.n += 1.0;
            side.sum += resid[i];
            side.sumsq += resid[i] * resid[i];
            side.rows.push(i);
        }
        debug_assert!(left.n > 0.0 && right.n > 0.0);

        let parent = &stats[leaf];
        let delta_lik = leaf_log_marginal(left.n, left.sum, left.sumsq, sigma2_std, self.sigma_mu2)
            + leaf_log_marginal(right.n, right.sum, right.sumsq, sigma2_std, self.sigma_mu2)
            - leaf_log_marginal(parent.n, parent.sum, parent.sumsq, sigma2_std, self.sigma_mu2);

        // Prunable count after the grow: the new internal node joins; the
        // grown leaf's parent (if it had two leaf children) drops out.
        let tree = &self.trees[t];
        let parent_id = tree.parent[leaf];
        let parent_was_prunable = parent_id != NO_PARENT
            && match tree.nodes[parent_id] {
                Node::Internal { left, right, .. } => {
                    tree.nodes[left].is_leaf() && tree.nodes[right].is_leaf()
                }
                Node::Leaf { .. } => false,
            };
        let n_prunable_after =
            tree.prunable_ids().len() + 1 - usize::from(parent_was_prunable);

        let log_alpha = log_accept_grow(
            &self.hyper,
            tree.nodes[leaf].depth(),
            delta_lik,
            self.node_growable(w, &left.rows),
            self.node_growable(w, &right.rows),
            leaves.len(),
            n_prunable_after,
        );
        if rng.random::<f64>().ln() < log_alpha {
            self.trees[t].grow(leaf, var, cut);
            self.grow_accepts += 1;
            true
        } else {
            false
        }
    }

    fn try_prune(
        &mut self,
        t: usize,
        w: &DMatrix<f64>,
        stats: &[LeafStats],
        sigma2_std: f64,
        rng: &mut impl Rng,
    ) -> bool {
        let prunable = self.trees[t].prunable_ids();
        if prunable.is_empty() {
            self.holds += 1;
            return false;
        }
        let node = prunable[rng.random_range(0..prunable.len())];
        let (left_id, right_id, depth) = match self.trees[t].nodes[node] {
            Node::Internal {
                left, right, depth, ..
            } => (left, right, depth),
            Node::Leaf { .. } => unreachable!("prunable set holds internal nodes"),
        };
        let (ls, rs) = (&stats[left_id], &stats[right_id]);
        let merged_n = ls.n + rs.n;
        let merged_sum = ls.sum + rs.sum;
        let merged_sumsq = ls.sumsq + rs.sumsq;
        let delta_lik =
            leaf_log_marginal(merged_n, merged_sum, merged_sumsq, sigma2_std, self.sigma_mu2)
                - leaf_log_marginal(ls.n, ls.sum, ls.sumsq, sigma2_std, self.sigma_mu2)
                - leaf_log_marginal(rs.n, rs.sum, rs.sumsq, sigma2_std, self.sigma_mu2);

        let n_leaves_after = self.trees[t].leaf_count() - 1;
        let log_alpha = log_accept_prune(
            &self.hyper,
            depth,
            delta_lik,
            self.node_growable(w, &ls.rows),
            self.node_growable(w, &rs.rows),
            prunable.len(),
            n_leaves_after,
        );
        if rng.random::<f64>().ln() < log_alpha {
            self.trees[t].prune(node);
            self.prune_accepts += 1;
            true
        } else {
            false
        }
    }

    fn redraw_leaf_means(
        &mut self,
        t: usize,
        stats: &[LeafStats],
        sigma2_std: f64,
        rng: &mut impl Rng,
    ) {
        let sigma_mu2 = self.sigma_mu2;
        let tree = &mut self.trees[t];
        for id in 0..tree.nodes.len() {
            if tree.free.contains(&id) {
                continue;
            }
            if let Node::Leaf { mean, .. } = &mut tree.nodes[id] {
                let st = &stats[id];
                let v = 1.0 / (1.0 / sigma_mu2 + st.n / sigma2_std);
                let m = v * st.sum / sigma2_std;
                *mean = m + v.sqrt() * rng.sample::<f64, _>(StandardNormal);
            }
        }
    }

}
