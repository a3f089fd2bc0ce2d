use super::Individual;
use crate::oracle::Evaluation;

/// The two search objectives: accuracy (maximized) and latency (minimized).
pub trait Objectives {
    fn accuracy(&self) -> f64;
    fn latency_ms(&self) -> f64;
}

impl Objectives for Individual {
    fn accuracy(&self) -> f64 {
        self.accuracy
    }
    fn latency_ms(&self) -> f64 {
        self.latency_ms
    }
}

impl Objectives for Evaluation {
    fn accuracy(&self) -> f64 {
        self.accuracy
    }
    fn latency_ms(&self) -> f64 {
        self.latency_ms
    }
}

impl<T: Objectives + ?Sized> Objectives for &T {
    fn accuracy(&self) -> f64 {
        (**self).accuracy()
    }
    fn latency_ms(&self) -> f64 {
        (**self).latency_ms()
    }
}

/// `a` dominates `b`: no slower, no less accurate, and strictly better in
/// at least one objective. Identical points do not dominate each other.
pub fn dominates<A: Objectives, B: Objectives>(a: &A, b: &B) -> bool {
    let (la, lb) = (a.latency_ms(), b.latency_ms());
    let (aa, ab) = (a.accuracy(), b.accuracy());
    la <= lb && aa >= ab && (la < lb || aa > ab)
}

/// Fast non-dominated sort. Returns fronts of indices into `pop`, best
/// first; indices inside each front are ascending.
pub fn non_dominated_sort<T: Objectives>(pop: &[T]) -> Vec<Vec<usize>> {
    let n = pop.len();
    let mut dominated_by_me: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut domination_count = vec![0usize; n];
    for p in 0..n {
        for q in (p + 1)..n {
            if dominates(&pop[p], &pop[q]) {
                dominated_by_me[p].push(q);
                domination_count[q] += 1;
            } else if dominates(&pop[q], &pop[p]) {
                dominated_by_me[q].push(p);
                domination_count[p] += 1;
            }
        }
    }
    let mut fronts = Vec::new();
    let mut current: Vec<usize> = (0..n).filter(|&i| domination_count[i] == 0).collect();
    while !current.is_empty() {
        let mut next = Vec::new();
        for &p in &current {
            for &q in &dominated_by_me[p] {
                domination_count[q] -= 1;
                if domination_count[q] == 0 {
                    next.push(q);
                }
            }
        }
        next.sort_unstable();
        fronts.push(current);
        current = next;
    }
    fronts
}

/// Crowding distance of each member of one front. Boundary points of each
/// objective get `+inf`; an objective with zero range contributes nothing.
pub fn crowding_distance<T: Objectives>(front: &[T]) -> Vec<f64> {
    let n = front.len();
    let mut dist = vec![0.0; n];
    if n <= 2 {
        return vec![f64::INFINITY; n];
    }
    let objectives: [fn(&T) -> f64; 2] = [|t| t.latency_ms(), |t| t.accuracy()];
    for value in objectives {
        let mut order: Vec<usize> = (0..n).collect();
        // Stable sort with an index tiebreak keeps the result deterministic.
        order.sort_by(|&a, &b| value(&front[a]).total_cmp(&value(&front[b])).then(a.cmp(&b)));
        let lo = value(&front[order[0]]);
        let hi = value(&front[order[n - 1]]);
        dist[order[0]] = f64::INFINITY;
        dist[order[n - 1]] = f64::INFINITY;
        let range = hi - lo;
        if range <= 0.0 {
            continue;
        }
        for w in 1..n - 1 {
            let i = order[w];
            if dist[i].is_finite() {
                dist[i] += (value(&front[order[w + 1]]) - value(&front[order[w - 1]])) / range;
            }
        }
    }
    dist
}

/// Sorts `pop` into fronts and writes each individual's rank and crowding.
pub fn assign_ranks(pop: &mut [Individual]) -> Vec<Vec<usize>> {
    let fronts = non_dominated_sort(pop);
    for (r, front) in fronts.iter().enumerate() {
        for &i in front {
            pop[i].rank = r + 1;
        }
    }
    assign_crowding(pop, &fronts);
    fronts
}

pub fn assign_crowding(pop: &mut [Individual], fronts: &[Vec<usize>]) {
    for front in fronts {
        let members: Vec<&Individual> = front.iter().map(|&i| &pop[i]).collect();
        let dist = crowding_distance(&members);
        for (&i, d) in front.iter().zip(dist) {
            pop[i].crowding = d;
        }
    }
}
