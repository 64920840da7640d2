//! Order-statistic index over the unlabeled-point probabilities.
//!
//! [`TopSumIndex`] maintains the multiset of `(point id, probability)` entries
//! ordered by probability descending (ties by ascending id) and answers
//! "sum of the m largest probabilities" queries in O(log n), including under
//! temporary removals and insertions that never touch the structure itself.
//! That delta form is what lets the nonmyopic policies score a hypothetical
//! observation without mutating anything.
//!
//! The structure is a treap with subtree (size, sum) aggregates. Priorities
//! are a fixed hash of the point id, so the shape — and therefore every
//! floating-point aggregate — is a pure function of the current entry set.
//! Identical entry sets produce bit-identical query answers, which the
//! pruning-soundness checks rely on. Aggregates are always recomputed from
//! the children (never incrementally adjusted), so rounding error stays
//! bounded by the tree depth instead of drifting with the mutation count.

use thiserror::Error;

use crate::model::KnnModel;

#[derive(Debug, Error)]
pub enum TopSumError {
    #[error("duplicate point id {0}")]
    DuplicateId(usize),
    #[error("point id {0} is not present")]
    AbsentId(usize),
    #[error("point id {0} is already present")]
    PresentId(usize),
    #[error("probability for point {id} must be finite, got {value}")]
    NotFinite { id: usize, value: f64 },
    #[error("probability for point {id} must lie in (0,1), got {value}")]
    OutOfRange { id: usize, value: f64 },
}

const NIL: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq)]
struct Key {
    p: f64,
    id: u32,
}

/// `a` comes before `b` in descending-probability order.
#[inline]
fn key_before(a: Key, b: Key) -> bool {
    a.p > b.p || (a.p == b.p && a.id < b.id)
}

#[inline]
fn priority(id: usize) -> u64 {
    // splitmix64: a bijection on u64, so distinct ids get distinct priorities
    // and the treap shape is canonical for a given entry set.
    let mut z = (id as u64).wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone)]
struct Node {
    p: f64,
    id: u32,
    prio: u64,
    left: u32,
    right: u32,
    size: u32,
    sum: f64,
}

/// Multiset of unlabeled-point probabilities with top-m prefix sums.
#[derive(Debug, Clone)]
pub struct TopSumIndex {
    nodes: Vec<Node>,
    free: Vec<u32>,
    root: u32,
    prob_of: Vec<Option<f64>>,
    len: usize,
}

impl TopSumIndex {
    /// Builds the index from `(id, probability)` entries. Ids must be
    /// distinct and probabilities must lie in (0,1).
    pub fn build(entries: impl IntoIterator<Item = (usize, f64)>) -> Result<Self, TopSumError> {
        let mut idx = Self {
            nodes: Vec::new(),
            free: Vec::new(),
            root: NIL,
            prob_of: Vec::new(),
            len: 0,
        };
        for (id, p) in entries {
            idx.insert(id, p)?;
        }
        Ok(idx)
    }

    /// Convenience: indexes every unlabeled point of a model.
    pub fn from_model(model: &KnnModel) -> Self {
        Self::build(model.unlabeled().map(|x| (x, model.probability(x))))
            .expect("model unlabeled pool has distinct ids and valid probabilities")
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Sum of all entries.
    pub fn total_sum(&self) -> f64 {
        if self.root == NIL {
            0.0
        } else {
            self.nodes[self.root as usize].sum
        }
    }

    /// The stored probability of a point, if present.
    pub fn probability_of(&self, id: usize) -> Option<f64> {
        self.prob_of.get(id).copied().flatten()
    }

    /// Inserts a new entry. Fails on duplicate ids or probabilities outside
    /// (0,1).
    pub fn insert(&mut self, id: usize, p: f64) -> Result<(), TopSumError> {
        if !p.is_finite() {
            return Err(TopSumError::NotFinite { id, value: p });
        }
        if p <= 0.0 || p >= 1.0 {
            return Err(TopSumError::OutOfRange { id, value: p });
        }
        if self.probability_of(id).is_some() {
            return Err(TopSumError::DuplicateId(id));
        }
        if id >= self.prob_of.len() {
            self.prob_of.resize(id + 1, None);
        }
        self.prob_of[id] = Some(p);
        self.len += 1;
        let node = self.alloc(id, p);
        let key = Key { p, id: id as u32 };
        let (l, r) = self.split(self.root, key);
        let lm = self.merge(l, node);
        self.root = self.merge(lm, r);
        Ok(())
    }

    /// Removes an entry by id, returning its stored probability.
    pub fn remove(&mut self, id: usize) -> Result<f64, TopSumError> {
        let p = self.probability_of(id).ok_or(TopSumError::AbsentId(id))?;
        self.prob_of[id] = None;
        self.len -= 1;
        self.root = self.remove_rec(self.root, Key { p, id: id as u32 });
        Ok(p)
    }

    /// Replaces the probability of an existing entry, returning the old one.
    pub fn update(&mut self, id: usize, p: f64) -> Result<f64, TopSumError> {
        let old = self.remove(id)?;
        self.insert(id, p)?;
        Ok(old)
    }

    /// Sum of the `m` largest probabilities (all of them when `m >= len`).
    pub fn top_sum(&self, m: usize) -> f64 {
        let mut acc = 0.0;
        self.take_top(self.root, m, &[], &[], &mut acc);
        acc
    }

    /// Top-m sum of the modified multiset `(entries \ removals) ∪ insertions`
    /// without mutating the index.
    ///
    /// Removals are set-like (duplicates ignored) and must all be present.
    /// Insertion ids must be absent after the removals and may carry any
    /// finite value — the pruning bound inserts 1.0, which is deliberately
    /// outside the entry range.
    pub fn top_sum_with_deltas(
        &self,
        m: usize,
        removals: &[usize],
        insertions: &[(usize, f64)],
    ) -> Result<f64, TopSumError> {
        let mut rem: Vec<Key> = Vec::with_capacity(removals.len());
        for &id in removals {
            let p = self.probability_of(id).ok_or(TopSumError::AbsentId(id))?;
            rem.push(Key { p, id: id as u32 });
        }
        rem.sort_unstable_by(|a, b| {
            if key_before(*a, *b) {
                std::cmp::Ordering::Less
            } else if a == b {
                std::cmp::Ordering::Equal
            } else {
                std::cmp::Ordering::Greater
            }
        });
        rem.dedup();

        let mut ins: Vec<Key> = Vec::with_capacity(insertions.len());
        for &(id, p) in insertions {
            if !p.is_finite() {
                return Err(TopSumError::NotFinite { id, value: p });
            }
            if self.probability_of(id).is_some() && !rem.iter().any(|k| k.id as usize == id) {
                return Err(TopSumError::PresentId(id));
            }
            ins.push(Key { p, id: id as u32 });
        }
        ins.sort_unstable_by(|a, b| {
            if key_before(*a, *b) {
                std::cmp::Ordering::Less
            } else {
                std::cmp::Ordering::Greater
            }
        });
        for w in ins.windows(2) {
            if w[0].id == w[1].id {
                return Err(TopSumError::DuplicateId(w[0].id as usize));
            }
        }

        let mut acc = 0.0;
        self.take_top(self.root, m, &ins, &rem, &mut acc);
        Ok(acc)
    }

    /// The maximum-probability entry whose id is not in `excluded`
    /// (ties by ascending id). `None` when every entry is excluded.
    pub fn max_excluding(&self, excluded: &[usize]) -> Option<(usize, f64)> {
        self.iter_desc().find(|&(id, _)| !excluded.contains(&id))
    }

    /// Entries in descending-probability order (ties by ascending id).
    pub fn iter_desc(&self) -> IterDesc<'_> {
        let mut it = IterDesc {
            index: self,
            stack: Vec::new(),
        };
        it.push_left_spine(self.root);
        it
    }

    /// The `m` largest entries in descending order.
    pub fn top_entries(&self, m: usize) -> Vec<(usize, f64)> {
        self.iter_desc().take(m).collect()
    }

    // -- treap internals ----------------------------------------------------

    fn alloc(&mut self, id: usize, p: f64) -> u32 {
        let node = Node {
            p,
            id: id as u32,
            prio: priority(id),
            left: NIL,
            right: NIL,
            size: 1,
            sum: p,
        };
        match self.free.pop() {
            Some(slot) => {
                self.nodes[slot as usize] = node;
                slot
            }
            None => {
                self.nodes.push(node);
                (self.nodes.len() - 1) as u32
            }
        }
    }

    #[inline]
    fn key(&self, t: u32) -> Key {
        let n = &self.nodes[t as usize];
        Key { p: n.p, id: n.id }
    }

    #[inline]
    fn subtree_size(&self, t: u32) -> u32 {
        if t == NIL {
            0
        } else {
            self.nodes[t as usize].size
        }
    }

    #[inline]
    fn subtree_sum(&self, t: u32) -> f64 {
        if t == NIL {
            0.0
        } else {
            self.nodes[t as usize].sum
        }
    }

    #[inline]
    fn pull(&mut self, t: u32) {
        let (l, r) = (self.nodes[t as usize].left, self.nodes[t as usize].right);
        let size = 1 + self.subtree_size(l) + self.subtree_size(r);
        // Fixed evaluation order keeps the aggregate a pure function of the
        // entry set.
        let sum = (self.nodes[t as usize].p + self.subtree_sum(l)) + self.subtree_sum(r);
        let n = &mut self.nodes[t as usize];
        n.size = size;
        n.sum = sum;
    }

    /// Splits into (entries strictly before `key`, the rest).
    fn split(&mut self, t: u32, key: Key) -> (u32, u32) {
        if t == NIL {
            return (NIL, NIL);
        }
        if key_before(self.key(t), key) {
            let right = self.nodes[t as usize].right;
            let (a, b) = self.split(right, key);
            self.nodes[t as usize].right = a;
            self.pull(t);
            (t, b)
        } else {
            let left = self.nodes[t as usize].left;
            let (a, b) = self.split(left, key);
            self.nodes[t as usize].left = b;
            self.pull(t);
            (a, t)
        }
    }

    /// Merges two treaps where every key in `l` precedes every key in `r`.
    fn merge(&mut self, l: u32, r: u32) -> u32 {
        if l == NIL {
            return r;
        }
        if r == NIL {
            return l;
        }
        if self.nodes[l as usize].prio > self.nodes[r as usize].prio {
            let lr = self.nodes[l as usize].right;
            let m = self.merge(lr, r);
            self.nodes[l as usize].right = m;
            self.pull(l);
            l
        } else {
            let rl = self.nodes[r as usize].left;
            let m = self.merge(l, rl);
            self.nodes[r as usize].left = m;
            self.pull(r);
            r
        }
    }

    fn remove_rec(&mut self, t: u32, key: Key) -> u32 {
        debug_assert_ne!(t, NIL, "removal key validated as present");
        let nk = self.key(t);
        if nk == key {
            let (l, r) = (self.nodes[t as usize].left, self.nodes[t as usize].right);
            self.free.push(t);
            return self.merge(l, r);
        }
        if key_before(key, nk) {
            let left = self.nodes[t as usize].left;
            let nl = self.remove_rec(left, key);
            self.nodes[t as usize].left = nl;
        } else {
            let right = self.nodes[t as usize].right;
            let nr = self.remove_rec(right, key);
            self.nodes[t as usize].right = nr;
        }
        self.pull(t);
        t
    }

    /// Greedy walk in descending order over `(tree \ rem) ∪ ins`, taking up
    /// to `m` entries into `acc`. `ins`/`rem` are sorted in traversal order
    /// and restricted to this subtree's key range. Returns the count taken.
    fn take_top(&self, t: u32, m: usize, ins: &[Key], rem: &[Key], acc: &mut f64) -> usize {
        if m == 0 {
            return 0;
        }
        if t == NIL {
            debug_assert!(rem.is_empty(), "removal key not found in tree");
            let take = m.min(ins.len());
            for k in &ins[..take] {
                *acc += k.p;
            }
            return take;
        }
        let node = &self.nodes[t as usize];
        if ins.is_empty() && rem.is_empty() && m >= node.size as usize {
            *acc += node.sum;
            return node.size as usize;
        }
        let nk = Key {
            p: node.p,
            id: node.id,
        };
        let ins_cut = ins.partition_point(|&k| key_before(k, nk));
        let (ins_l, ins_r) = ins.split_at(ins_cut);
        let rem_cut = rem.partition_point(|&k| key_before(k, nk));
        let (rem_l, rem_rest) = rem.split_at(rem_cut);
        let (node_removed, rem_r) = match rem_rest.first() {
            Some(k) if k.id == node.id => (true, &rem_rest[1..]),
            _ => (false, rem_rest),
        };

        let (left, right, p) = (node.left, node.right, node.p);
        let mut taken = self.take_top(left, m, ins_l, rem_l, acc);
        if taken < m && !node_removed {
            *acc += p;
            taken += 1;
        }
        if taken < m {
            taken += self.take_top(right, m - taken, ins_r, rem_r, acc);
        }
        taken
    }
}

pub struct IterDesc<'a> {
    index: &'a TopSumIndex,
    stack: Vec<u32>,
}

impl IterDesc<'_> {
    fn push_left_spine(&mut self, mut t: u32) {
        while t != NIL {
            self.stack.push(t);
            t = self.index.nodes[t as usize].left;
        }
    }
}

impl Iterator for IterDesc<'_> {
    type Item = (usize, f64);

    fn next(&mut self) -> Option<(usize, f64)> {
        let t = self.stack.pop()?;
        let node = &self.index.nodes[t as usize];
        self.push_left_spine(node.right);
        Some((node.id as usize, node.p))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Compensated (Kahan) sort-and-sum oracle.
    fn brute_top_sum(entries: &[(usize, f64)], m: usize) -> f64 {
        let mut probs: Vec<(f64, usize)> = entries.iter().map(|&(id, p)| (p, id)).collect();
        probs.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
        let mut sum = 0.0;
        let mut c = 0.0;
        for &(p, _) in probs.iter().take(m) {
            let y = p - c;
            let t = sum + y;
            c = (t - sum) - y;
            sum = t;
        }
        sum
    }

    fn random_entries(rng: &mut ChaCha8Rng, n: usize) -> Vec<(usize, f64)> {
        (0..n)
            .map(|id| (id, rng.random_range(1e-6..1.0 - 1e-6)))
            .collect()
    }

    #[test]
    fn empty_index() {
        let idx = TopSumIndex::build(Vec::new()).unwrap();
        assert_eq!(idx.top_sum(0), 0.0);
        assert_eq!(idx.top_sum(5), 0.0);
        assert!(idx.max_excluding(&[]).is_none());
    }

    #[test]
    fn small_example() {
        let idx = TopSumIndex::build(vec![(0, 0.9), (1, 0.5), (2, 0.2)]).unwrap();
        assert!((idx.top_sum(2) - 1.4).abs() < 1e-15);
        assert_eq!(idx.top_sum(0), 0.0);
        assert!((idx.top_sum(10) - 1.6).abs() < 1e-15);
        assert_eq!(idx.max_excluding(&[]), Some((0, 0.9)));
        assert_eq!(idx.max_excluding(&[0]), Some((1, 0.5)));
        assert_eq!(idx.max_excluding(&[0, 1, 2]), None);
    }

    #[test]
    fn duplicate_id_rejected() {
        let err = TopSumIndex::build(vec![(3, 0.5), (3, 0.6)]);
        assert!(matches!(err, Err(TopSumError::DuplicateId(3))));
    }

    #[test]
    fn probability_range_checked() {
        assert!(matches!(
            TopSumIndex::build(vec![(0, 1.0)]),
            Err(TopSumError::OutOfRange { .. })
        ));
        assert!(matches!(
            TopSumIndex::build(vec![(0, f64::NAN)]),
            Err(TopSumError::NotFinite { .. })
        ));
    }

    #[test]
    fn matches_brute_force_for_all_m() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let entries = random_entries(&mut rng, 1000);
        let idx = TopSumIndex::build(entries.clone()).unwrap();
        for m in 0..=entries.len() {
            let got = idx.top_sum(m);
            let want = brute_top_sum(&entries, m);
            assert!((got - want).abs() < 1e-12, "m={m}: got {got}, want {want}");
        }
    }

    #[test]
    fn delta_query_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let entries = random_entries(&mut rng, 64);
        let idx = TopSumIndex::build(entries).unwrap();
        for m in [0, 1, 7, 64] {
            assert_eq!(
                idx.top_sum(m),
                idx.top_sum_with_deltas(m, &[], &[]).unwrap()
            );
        }
    }

    #[test]
    fn delta_query_example() {
        let idx = TopSumIndex::build(vec![(0, 0.9), (1, 0.5), (2, 0.2)]).unwrap();
        let got = idx.top_sum_with_deltas(2, &[1], &[(1, 0.95)]).unwrap();
        assert!((got - 1.85).abs() < 1e-15);
    }

    #[test]
    fn delta_query_matches_rebuild_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for trial in 0..60 {
            let n = rng.random_range(1..80);
            let entries = random_entries(&mut rng, n);
            let idx = TopSumIndex::build(entries.clone()).unwrap();

            let n_rem = rng.random_range(0..=n.min(10));
            let mut removals: Vec<usize> = Vec::new();
            while removals.len() < n_rem {
                let id = rng.random_range(0..n);
                if !removals.contains(&id) {
                    removals.push(id);
                }
            }
            let mut insertions: Vec<(usize, f64)> = Vec::new();
            for &id in removals.iter().take(rng.random_range(0..=n_rem)) {
                insertions.push((id, rng.random_range(0.0..1.5)));
            }
            // Some brand-new ids too.
            for extra in 0..rng.random_range(0..4) {
                insertions.push((n + extra, rng.random_range(0.0..1.5)));
            }

            let mut modified: Vec<(usize, f64)> = entries
                .iter()
                .copied()
                .filter(|(id, _)| !removals.contains(id))
                .collect();
            modified.extend_from_slice(&insertions);

            for m in [0, 1, 2, n / 2, n, n + 4] {
                let got = idx.top_sum_with_deltas(m, &removals, &insertions).unwrap();
                let want = brute_top_sum(&modified, m);
                assert!(
                    (got - want).abs() < 1e-12,
                    "trial {trial}, m={m}: got {got}, want {want}"
                );
            }
        }
    }

    #[test]
    fn delta_query_leaves_index_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let entries = random_entries(&mut rng, 50);
        let idx = TopSumIndex::build(entries).unwrap();
        let before: Vec<(usize, f64)> = idx.iter_desc().collect();
        let a = idx.top_sum_with_deltas(10, &[3, 7], &[(3, 0.99)]).unwrap();
        let b = idx.top_sum_with_deltas(10, &[3, 7], &[(3, 0.99)]).unwrap();
        assert_eq!(a, b);
        let after: Vec<(usize, f64)> = idx.iter_desc().collect();
        assert_eq!(before, after);
    }

    #[test]
    fn delta_errors() {
        let idx = TopSumIndex::build(vec![(0, 0.9), (1, 0.5)]).unwrap();
        assert!(matches!(
            idx.top_sum_with_deltas(1, &[5], &[]),
            Err(TopSumError::AbsentId(5))
        ));
        assert!(matches!(
            idx.top_sum_with_deltas(1, &[], &[(1, 0.4)]),
            Err(TopSumError::PresentId(1))
        ));
        assert!(matches!(
            idx.top_sum_with_deltas(1, &[0], &[(2, 0.4), (2, 0.6)]),
            Err(TopSumError::DuplicateId(2))
        ));
    }

    #[test]
    fn max_excluding_matches_linear_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..40 {
            let n = rng.random_range(1..60);
            let entries = random_entries(&mut rng, n);
            let idx = TopSumIndex::build(entries.clone()).unwrap();
            let n_ex = rng.random_range(0..=5.min(n));
            let excluded: Vec<usize> = (0..n_ex).map(|_| rng.random_range(0..n)).collect();
            let want = entries
                .iter()
                .filter(|(id, _)| !excluded.contains(id))
                .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(b.0.cmp(&a.0)))
                .map(|&(id, p)| (id, p));
            assert_eq!(idx.max_excluding(&excluded), want);
        }
    }

    #[test]
    fn ties_order_by_ascending_id() {
        let idx = TopSumIndex::build(vec![(5, 0.5), (1, 0.5), (3, 0.5)]).unwrap();
        let order: Vec<usize> = idx.iter_desc().map(|(id, _)| id).collect();
        assert_eq!(order, vec![1, 3, 5]);
        assert_eq!(idx.max_excluding(&[]), Some((1, 0.5)));
    }

    #[test]
    fn mutations_keep_aggregates_consistent() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut entries = random_entries(&mut rng, 200);
        let mut idx = TopSumIndex::build(entries.clone()).unwrap();
        for _ in 0..500 {
            if rng.random_bool(0.5) && !entries.is_empty() {
                let at = rng.random_range(0..entries.len());
                let (id, _) = entries.swap_remove(at);
                idx.remove(id).unwrap();
            } else {
                let id = rng.random_range(0..400);
                if entries.iter().all(|&(e, _)| e != id) {
                    let p = rng.random_range(1e-6..1.0 - 1e-6);
                    idx.insert(id, p).unwrap();
                    entries.push((id, p));
                }
            }
        }
        assert_eq!(idx.len(), entries.len());
        for m in [0, 1, entries.len() / 2, entries.len()] {
            let want = brute_top_sum(&entries, m);
            assert!((idx.top_sum(m) - want).abs() < 1e-12);
        }
    }

    #[test]
    fn canonical_shape_gives_identical_sums() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let entries = random_entries(&mut rng, 300);
        let mut shuffled = entries.clone();
        // Reverse insertion order; shape and sums must not change.
        shuffled.reverse();
        let a = TopSumIndex::build(entries).unwrap();
        let b = TopSumIndex::build(shuffled).unwrap();
        for m in 0..=300 {
            assert_eq!(a.top_sum(m), b.top_sum(m), "sum differs at m={m}");
        }
    }
}
