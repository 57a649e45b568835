use serde::{Deserialize, Serialize};

/// `a` dominates `b` when it is no worse in every objective and strictly
/// better in at least one (all objectives minimized).
pub fn dominates(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| x <= y) && a.iter().zip(b).any(|(x, y)| x < y)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoEntry<T> {
    /// Sample id of the evaluation that produced this entry.
    pub id: usize,
    pub objectives: Vec<f64>,
    pub item: T,
}

/// Nondominated entries in insertion order. An entry equal in every
/// objective to a member is rejected, so the earliest sample wins ties.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoSet<T> {
    entries: Vec<ParetoEntry<T>>,
}

impl<T> Default for ParetoSet<T> {
    fn default() -> Self {
        Self {
            entries: Vec::new(),
        }
    }
}

impl<T> ParetoSet<T> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts unless dominated or duplicated; evicts members the new entry
    /// dominates. Returns whether the entry was kept.
    pub fn insert(&mut self, id: usize, objectives: Vec<f64>, item: T) -> bool {
        if objectives.iter().any(|v| v.is_nan()) {
            return false;
        }
        if self
            .entries
            .iter()
            .any(|e| e.objectives == objectives || dominates(&e.objectives, &objectives))
        {
            return false;
        }
        self.entries
            .retain(|e| !dominates(&objectives, &e.objectives));
        self.entries.push(ParetoEntry {
            id,
            objectives,
            item,
        });
        true
    }

    pub fn entries(&self) -> &[ParetoEntry<T>] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries sorted by `key` ascending, ties by sample id.
    pub fn ranked(&self, key: impl Fn(&ParetoEntry<T>) -> f64) -> Vec<&ParetoEntry<T>> {
        let mut v: Vec<&ParetoEntry<T>> = self.entries.iter().collect();
        v.sort_by(|a, b| key(a).total_cmp(&key(b)).then(a.id.cmp(&b.id)));
        v
    }

    pub fn offset_ids(&mut self, base: usize) {
        for e in &mut self.entries {
            e.id += base;
        }
    }

    pub fn into_entries(self) -> Vec<ParetoEntry<T>> {
        self.entries
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dominance_example() {
        let mut p = ParetoSet::new();
        assert!(p.insert(0, vec![1.0, 2.0], ()));
        assert!(p.insert(1, vec![2.0, 1.0], ()));
        assert!(!p.insert(2, vec![2.0, 2.0], ()));
        let front: Vec<_> = p.entries().iter().map(|e| e.objectives.clone()).collect();
        assert_eq!(front, vec![vec![1.0, 2.0], vec![2.0, 1.0]]);
    }

    #[test]
    fn eviction_and_ties() {
        let mut p = ParetoSet::new();
        p.insert(0, vec![3.0, 3.0], "a");
        p.insert(1, vec![1.0, 4.0], "b");
        assert!(p.insert(2, vec![2.0, 2.0], "c"));
        assert_eq!(p.len(), 2);
        assert!(!p.insert(3, vec![2.0, 2.0], "d"));
        assert_eq!(p.entries()[1].item, "c");
    }
}
