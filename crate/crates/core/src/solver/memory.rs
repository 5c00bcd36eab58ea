use std::collections::VecDeque;

use nalgebra::DVector;

use crate::derivatives::SurfaceCut;

/// Linearizations stored at rejected trial points, oldest first.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MemorySet {
    entries: VecDeque<SurfaceCut>,
    cap: Option<usize>,
}

impl MemorySet {
    pub fn new(cap: Option<usize>) -> Self {
        MemorySet {
            entries: VecDeque::new(),
            cap,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = &SurfaceCut> {
        self.entries.iter()
    }

    /// Store `cut` unless its base point is already present. Evicts the
    /// oldest entry beyond the cap. Returns whether anything was stored.
    pub fn insert(&mut self, cut: SurfaceCut) -> bool {
        if self.entries.iter().any(|e| e.base_point == cut.base_point) {
            return false;
        }
        self.entries.push_back(cut);
        if let Some(cap) = self.cap {
            while self.entries.len() > cap {
                self.entries.pop_front();
            }
        }
        true
    }

    /// Entries whose base point lies within `radius` of `x` in the max norm.
    pub fn active(&self, x: &DVector<f64>, radius: f64) -> Vec<SurfaceCut> {
        self.entries
            .iter()
            .filter(|e| (&e.base_point - x).amax() <= radius)
            .cloned()
            .collect()
    }
}
