//! Sequential tree-reweighted message passing (TRW-S) on a 4-connected
//! pixel grid, after Kolmogorov's convergent variant: row-major forward and
//! reverse sweeps with gamma-averaged message updates, a lower bound from
//! the monotonic-chain dual, and a conditioned forward pass to extract the
//! final labeling.
//!
//! Pixels whose unary costs are all infinite are holes: they leave the
//! graph entirely and are reported in [`Labeling::hole`].

use crate::error::{Error, Result};

/// Pairwise MRF over a `width` x `height` grid with `labels` states per
/// pixel. Unaries may be `+inf` (forbidden state); pairwise costs must be
/// finite.
#[derive(Debug, Clone)]
pub struct GridProblem {
    width: usize,
    height: usize,
    labels: usize,
    /// `(y*width + x)*labels + l`.
    unary: Vec<f64>,
    /// Edge (x,y)-(x+1,y): `((y*width + x)*labels + la)*labels + lb`.
    /// Entries for x = width-1 are unused.
    horizontal: Vec<f64>,
    /// Edge (x,y)-(x,y+1), same layout; entries for y = height-1 unused.
    vertical: Vec<f64>,
}

impl GridProblem {
    pub fn new(
        width: usize,
        height: usize,
        labels: usize,
        unary: Vec<f64>,
        horizontal: Vec<f64>,
        vertical: Vec<f64>,
    ) -> Result<Self> {
        let n = width * height;
        if width == 0 || height == 0 || labels == 0 {
            return Err(Error::invalid_argument("empty grid problem"));
        }
        if unary.len() != n * labels {
            return Err(Error::invalid_argument(format!(
                "unary has {} entries, expected {}",
                unary.len(),
                n * labels
            )));
        }
        if horizontal.len() != n * labels * labels || vertical.len() != n * labels * labels {
            return Err(Error::invalid_argument(
                "pairwise tables must hold labels^2 entries per pixel",
            ));
        }
        if unary.iter().any(|c| c.is_nan())
            || horizontal.iter().any(|c| !c.is_finite())
            || vertical.iter().any(|c| !c.is_finite())
        {
            return Err(Error::invalid_argument(
                "unaries must not be NaN and pairwise costs must be finite",
            ));
        }
        Ok(GridProblem {
            width,
            height,
            labels,
            unary,
            horizontal,
            vertical,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn labels(&self) -> usize {
        self.labels
    }

    fn node(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    fn unary_at(&self, node: usize, label: usize) -> f64 {
        self.unary[node * self.labels + label]
    }

    /// Cost of edge `(from_node, to its right/down neighbor)`.
    fn pair_at(&self, table: &[f64], node: usize, la: usize, lb: usize) -> f64 {
        table[(node * self.labels + la) * self.labels + lb]
    }

    fn is_hole(&self, node: usize) -> bool {
        let k = self.labels;
        self.unary[node * k..(node + 1) * k]
            .iter()
            .all(|c| c.is_infinite())
    }

    /// Energy of a full labeling, counting non-hole nodes and edges whose
    /// endpoints are both non-hole.
    pub fn energy(&self, labels: &[usize], hole: &[bool]) -> f64 {
        let mut total = 0.0;
        for y in 0..self.height {
            for x in 0..self.width {
                let i = self.node(x, y);
                if hole[i] {
                    continue;
                }
                total += self.unary_at(i, labels[i]);
                if x + 1 < self.width && !hole[i + 1] {
                    total += self.pair_at(&self.horizontal, i, labels[i], labels[i + 1]);
                }
                if y + 1 < self.height && !hole[i + self.width] {
                    total += self.pair_at(&self.vertical, i, labels[i], labels[i + self.width]);
                }
            }
        }
        total
    }
}

#[derive(Debug, Clone, Copy)]
pub struct TrwsOptions {
    pub max_iter: usize,
    /// Stop once a full iteration improves the lower bound by less.
    pub bound_tol: f64,
}

impl Default for TrwsOptions {
    fn default() -> Self {
        TrwsOptions {
            max_iter: 100,
            bound_tol: 1e-6,
        }
    }
}

/// Solver output.
#[derive(Debug, Clone)]
pub struct Labeling {
    /// Chosen candidate per pixel; 0 (arbitrary) at hole pixels.
    pub labels: Vec<usize>,
    /// True where every candidate was infinite and the pixel left the graph.
    pub hole: Vec<bool>,
    /// Energy of `labels` under the problem's original costs.
    pub energy: f64,
    /// Final monotonic-chain dual value; never exceeds `energy`.
    pub lower_bound: f64,
    /// Lower bound after each completed iteration (non-decreasing).
    pub bound_history: Vec<f64>,
}

struct Solver<'a> {
    p: &'a GridProblem,
    hole: Vec<bool>,
    gamma: Vec<f64>,
    /// Messages into each node from the given direction, `node*k + label`;
    /// zero where no such neighbor exists.
    from_left: Vec<f64>,
    from_right: Vec<f64>,
    from_up: Vec<f64>,
    from_down: Vec<f64>,
}

impl<'a> Solver<'a> {
    fn new(p: &'a GridProblem) -> Solver<'a> {
        let n = p.width * p.height;
        let k = p.labels;
        let hole: Vec<bool> = (0..n).map(|i| p.is_hole(i)).collect();
        let mut gamma = vec![1.0; n];
        for y in 0..p.height {
            for x in 0..p.width {
                let i = p.node(x, y);
                if hole[i] {
                    continue;
                }
                let live = |xx: isize, yy: isize| -> usize {
                    if xx < 0 || yy < 0 || xx >= p.width as isize || yy >= p.height as isize {
                        return 0;
                    }
                    usize::from(!hole[p.node(xx as usize, yy as usize)])
                };
                let fwd = live(x as isize + 1, y as isize) + live(x as isize, y as isize + 1);
                let bwd = live(x as isize - 1, y as isize) + live(x as isize, y as isize - 1);
                gamma[i] = 1.0 / fwd.max(bwd).max(1) as f64;
            }
        }
        Solver {
            p,
            hole,
            gamma,
            from_left: vec![0.0; n * k],
            from_right: vec![0.0; n * k],
            from_up: vec![0.0; n * k],
            from_down: vec![0.0; n * k],
        }
    }

    fn live(&self, x: isize, y: isize) -> bool {
        x >= 0
            && y >= 0
            && x < self.p.width as isize
            && y < self.p.height as isize
            && !self.hole[self.p.node(x as usize, y as usize)]
    }

    /// theta_i plus every incoming message.
    fn local_costs(&self, node: usize, out: &mut [f64]) {
        let k = self.p.labels;
        for l in 0..k {
            out[l] = self.p.unary_at(node, l)
                + self.from_left[node * k + l]
                + self.from_right[node * k + l]
                + self.from_up[node * k + l]
                + self.from_down[node * k + l];
        }
    }

    /// Forward sweep: visit pixels in row-major order and refresh the
    /// messages along each forward (right, down) edge:
    /// `m(xj) = min_xi(gamma*D(xi) - m_rev(xi) + theta(xi,xj))`,
    /// normalized to a zero minimum.
    fn forward_sweep(&mut self, local: &mut [f64]) {
        let (w, h, k) = (self.p.width, self.p.height, self.p.labels);
        for y in 0..h {
            for x in 0..w {
                let i = self.p.node(x, y);
                if self.hole[i] {
                    continue;
                }
                self.local_costs(i, local);
                if self.live(x as isize + 1, y as isize) {
                    // message into the right neighbor's from_left slot
                    let j = i + 1;
                    let gamma = self.gamma[i];
                    let mut fresh = vec![0.0; k];
                    for lj in 0..k {
                        let mut best = f64::INFINITY;
                        for li in 0..k {
                            let v = gamma * local[li] - self.from_right[i * k + li]
                                + self.p.pair_at(&self.p.horizontal, i, li, lj);
                            if v < best {
                                best = v;
                            }
                        }
                        fresh[lj] = best;
                    }
                    let base = fresh.iter().cloned().fold(f64::INFINITY, f64::min);
                    for l in 0..k {
                        self.from_left[j * k + l] = fresh[l] - base;
                    }
                }
                if self.live(x as isize, y as isize + 1) {
                    let j = i + w;
                    let gamma = self.gamma[i];
                    let mut fresh = vec![0.0; k];
                    for lj in 0..k {
                        let mut best = f64::INFINITY;
                        for li in 0..k {
                            let v = gamma * local[li] - self.from_down[i * k + li]
                                + self.p.pair_at(&self.p.vertical, i, li, lj);
                            if v < best {
                                best = v;
                            }
                        }
                        fresh[lj] = best;
                    }
                    let base = fresh.iter().cloned().fold(f64::INFINITY, f64::min);
                    for l in 0..k {
                        self.from_up[j * k + l] = fresh[l] - base;
                    }
                }
            }
        }
    }

    fn backward_sweep(&mut self, local: &mut [f64]) {
        let (w, h, k) = (self.p.width, self.p.height, self.p.labels);
        for y in (0..h).rev() {
            for x in (0..w).rev() {
                let i = self.p.node(x, y);
                if self.hole[i] {
                    continue;
                }
                self.local_costs(i, local);
                if self.live(x as isize - 1, y as isize) {
                    let j = i - 1;
                    let gamma = self.gamma[i];
                    let mut fresh = vec![0.0; k];
                    for lj in 0..k {
                        let mut best = f64::INFINITY;
                        for li in 0..k {
                            // edge (j, i): j owns the table, i is second
                            let v = gamma * local[li] - self.from_left[i * k + li]
                                + self.p.pair_at(&self.p.horizontal, j, lj, li);
                            if v < best {
                                best = v;
                            }
                        }
                        fresh[lj] = best;
                    }
                    let base = fresh.iter().cloned().fold(f64::INFINITY, f64::min);
                    for l in 0..k {
                        self.from_right[j * k + l] = fresh[l] - base;
                    }
                }
                if self.live(x as isize, y as isize - 1) {
                    let j = i - w;
                    let gamma = self.gamma[i];
                    let mut fresh = vec![0.0; k];
                    for lj in 0..k {
                        let mut best = f64::INFINITY;
                        for li in 0..k {
                            let v = gamma * local[li] - self.from_up[i * k + li]
                                + self.p.pair_at(&self.p.vertical, j, lj, li);
                            if v < best {
                                best = v;
                            }
                        }
                        fresh[lj] = best;
                    }
                    let base = fresh.iter().cloned().fold(f64::INFINITY, f64::min);
                    for l in 0..k {
                        self.from_down[j * k + l] = fresh[l] - base;
                    }
                }
            }
        }
    }

    /// Monotonic-chain dual of the current reparameterization: exact DP
    /// minima of every maximal horizontal and vertical run, with each
    /// node's reparameterized unary split evenly across the chains that
    /// contain it. Always a valid lower bound on the labeling energy.
    fn chain_dual(&self) -> f64 {
        let (w, h, k) = (self.p.width, self.p.height, self.p.labels);
        let repar_unary = |i: usize, l: usize| -> f64 {
            self.p.unary_at(i, l)
                + self.from_left[i * k + l]
                + self.from_right[i * k + l]
                + self.from_up[i * k + l]
                + self.from_down[i * k + l]
        };
        let mut share = vec![0.0f64; w * h];
        for y in 0..h {
            for x in 0..w {
                let i = self.p.node(x, y);
                if self.hole[i] {
                    continue;
                }
                let horiz = self.live(x as isize - 1, y as isize)
                    || self.live(x as isize + 1, y as isize);
                let vert = self.live(x as isize, y as isize - 1)
                    || self.live(x as isize, y as isize + 1);
                share[i] = match (horiz, vert) {
                    (true, true) => 0.5,
                    (false, false) => 1.0, // isolated: its own chain
                    _ => 1.0,
                };
            }
        }

        let mut total = 0.0;
        let mut cost = vec![0.0f64; k];
        let mut next = vec![0.0f64; k];

        // isolated nodes
        for y in 0..h {
            for x in 0..w {
                let i = self.p.node(x, y);
                if self.hole[i]
                    || self.live(x as isize - 1, y as isize)
                    || self.live(x as isize + 1, y as isize)
                    || self.live(x as isize, y as isize - 1)
                    || self.live(x as isize, y as isize + 1)
                {
                    continue;
                }
                let best = (0..k)
                    .map(|l| repar_unary(i, l))
                    .fold(f64::INFINITY, f64::min);
                total += best;
            }
        }

        // horizontal chains
        for y in 0..h {
            let mut x = 0;
            while x < w {
                let i = self.p.node(x, y);
                if self.hole[i] || !self.live(x as isize + 1, y as isize) {
                    x += 1;
                    continue;
                }
                // chain start at x
                for l in 0..k {
                    cost[l] = share[i] * repar_unary(i, l);
                }
                let mut end = x;
                while self.live(end as isize + 1, y as isize) {
                    let a = self.p.node(end, y);
                    let b = a + 1;
                    for lb in 0..k {
                        let mut best = f64::INFINITY;
                        for la in 0..k {
                            let edge = self.p.pair_at(&self.p.horizontal, a, la, lb)
                                - self.from_left[b * k + lb]
                                - self.from_right[a * k + la];
                            let v = cost[la] + edge;
                            if v < best {
                                best = v;
                            }
                        }
                        next[lb] = best + share[b] * repar_unary(b, lb);
                    }
                    cost.copy_from_slice(&next);
                    end += 1;
                }
                total += cost.iter().cloned().fold(f64::INFINITY, f64::min);
                x = end + 1;
            }
        }

        // vertical chains
        for x in 0..w {
            let mut y = 0;
            while y < h {
                let i = self.p.node(x, y);
                if self.hole[i] || !self.live(x as isize, y as isize + 1) {
                    y += 1;
                    continue;
                }
                for l in 0..k {
                    cost[l] = share[i] * repar_unary(i, l);
                }
                let mut end = y;
                while self.live(x as isize, end as isize + 1) {
                    let a = self.p.node(x, end);
                    let b = a + w;
                    for lb in 0..k {
                        let mut best = f64::INFINITY;
                        for la in 0..k {
                            let edge = self.p.pair_at(&self.p.vertical, a, la, lb)
                                - self.from_up[b * k + lb]
                                - self.from_down[a * k + la];
                            let v = cost[la] + edge;
                            if v < best {
                                best = v;
                            }
                        }
                        next[lb] = best + share[b] * repar_unary(b, lb);
                    }
                    cost.copy_from_slice(&next);
                    end += 1;
                }
                total += cost.iter().cloned().fold(f64::INFINITY, f64::min);
                y = end + 1;
            }
        }
        total
    }

    /// Final labeling: forward pass conditioning each pixel on its already
    /// assigned left/up neighbors plus the messages from the unprocessed
    /// right/down neighbors; ties break to the lowest index.
    fn extract(&self) -> Vec<usize> {
        let (w, h, k) = (self.p.width, self.p.height, self.p.labels);
        let mut labels = vec![0usize; w * h];
        for y in 0..h {
            for x in 0..w {
                let i = self.p.node(x, y);
                if self.hole[i] {
                    continue;
                }
                let mut best_label = 0;
                let mut best = f64::INFINITY;
                for l in 0..k {
                    let mut c = self.p.unary_at(i, l)
                        + self.from_right[i * k + l]
                        + self.from_down[i * k + l];
                    if self.live(x as isize - 1, y as isize) {
                        c += self
                            .p
                            .pair_at(&self.p.horizontal, i - 1, labels[i - 1], l);
                    }
                    if self.live(x as isize, y as isize - 1) {
                        c += self.p.pair_at(&self.p.vertical, i - w, labels[i - w], l);
                    }
                    if c < best {
                        best = c;
                        best_label = l;
                    }
                }
                labels[i] = best_label;
            }
        }
        labels
    }
}

/// Cost of assigning `l` to the node at (x, y) given the current labels of
/// its live neighbors: the unary plus every incident pairwise term, each of
/// which appears in the total energy exactly once.
fn conditional_cost(
    p: &GridProblem,
    hole: &[bool],
    labels: &[usize],
    x: usize,
    y: usize,
    l: usize,
) -> f64 {
    let (w, h) = (p.width, p.height);
    let i = p.node(x, y);
    let live = |xx: isize, yy: isize| -> bool {
        xx >= 0
            && yy >= 0
            && xx < w as isize
            && yy < h as isize
            && !hole[yy as usize * w + xx as usize]
    };
    let mut c = p.unary_at(i, l);
    if live(x as isize + 1, y as isize) {
        c += p.pair_at(&p.horizontal, i, l, labels[i + 1]);
    }
    if x > 0 && live(x as isize - 1, y as isize) {
        c += p.pair_at(&p.horizontal, i - 1, labels[i - 1], l);
    }
    if live(x as isize, y as isize + 1) {
        c += p.pair_at(&p.vertical, i, l, labels[i + w]);
    }
    if y > 0 && live(x as isize, y as isize - 1) {
        c += p.pair_at(&p.vertical, i - w, labels[i - w], l);
    }
    c
}

/// Greedy label descent (iterated conditional modes): raster-order sweeps
/// that move each node to its cheapest conditional label, keeping the
/// current label unless a strictly cheaper one exists. Every accepted move
/// strictly lowers the total energy, so the loop terminates on its own; the
/// sweep cap is a safety net.
fn greedy_descent(p: &GridProblem, hole: &[bool], labels: &mut [usize]) {
    let (w, h, k) = (p.width, p.height, p.labels);
    for _ in 0..1000 {
        let mut changed = false;
        for y in 0..h {
            for x in 0..w {
                let i = p.node(x, y);
                if hole[i] {
                    continue;
                }
                let mut best = (conditional_cost(p, hole, labels, x, y, labels[i]), labels[i]);
                for l in 0..k {
                    let c = conditional_cost(p, hole, labels, x, y, l);
                    if c < best.0 {
                        best = (c, l);
                    }
                }
                if best.1 != labels[i] {
                    labels[i] = best.1;
                    changed = true;
                }
            }
        }
        if !changed {
            return;
        }
    }
}

pub fn solve(problem: &GridProblem, options: TrwsOptions) -> Result<Labeling> {
    if options.max_iter == 0 {
        return Err(Error::invalid_argument("max_iter must be >= 1"));
    }
    let mut solver = Solver::new(problem);
    let mut local = vec![0.0; problem.labels];
    let mut bound_history = Vec::new();
    for _ in 0..options.max_iter {
        solver.forward_sweep(&mut local);
        solver.backward_sweep(&mut local);
        let bound = solver.chain_dual();
        let done = bound_history
            .last()
            .is_some_and(|prev: &f64| bound - prev < options.bound_tol);
        bound_history.push(bound);
        if done {
            break;
        }
    }
    let hole = solver.hole.clone();

    // Rounding: polish the min-marginal extraction with greedy descent, and
    // race it against greedy descent from the per-node unary minimizer. On
    // tree-structured problems the extraction is already optimal and the
    // polish is a no-op; on loopy graphs the best of the two keeps the
    // returned labeling at least as good as a plain ICM baseline.
    let mut labels = solver.extract();
    greedy_descent(problem, &hole, &mut labels);
    let k = problem.labels;
    let mut greedy: Vec<usize> = (0..problem.width * problem.height)
        .map(|i| {
            let mut best = (f64::INFINITY, 0usize);
            for l in 0..k {
                let u = problem.unary_at(i, l);
                if u < best.0 {
                    best = (u, l);
                }
            }
            best.1
        })
        .collect();
    greedy_descent(problem, &hole, &mut greedy);
    let energy_extracted = problem.energy(&labels, &hole);
    let energy_greedy = problem.energy(&greedy, &hole);
    let (labels, energy) = if energy_greedy < energy_extracted {
        (greedy, energy_greedy)
    } else {
        (labels, energy_extracted)
    };

    Ok(Labeling {
        labels,
        hole,
        energy,
        lower_bound: *bound_history.last().expect("at least one iteration"),
        bound_history,
    })
}
