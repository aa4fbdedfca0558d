//! Replay memory: per-iteration transition buckets with FIFO retention of
//! the most recent U iterations.

use alloc::collections::VecDeque;
use alloc::vec::Vec;

use crate::tensor::PixelTensor;

#[derive(Debug, Clone)]
pub struct Transition {
    pub s: PixelTensor,
    pub a: usize,
    pub r: f64,
    pub s_next: PixelTensor,
    pub terminated: bool,
}

#[derive(Debug)]
pub struct ReplayMemory {
    buckets: VecDeque<(usize, Vec<Transition>)>,
    retain: usize,
}

impl ReplayMemory {
    pub fn new(retain: usize) -> Self {
        assert!(retain >= 1);
        Self { buckets: VecDeque::new(), retain }
    }

    /// Open the bucket for a new data-collection iteration, evicting the
    /// oldest once more than `retain` are held.
    pub fn begin_iteration(&mut self, iteration: usize) {
        self.buckets.push_back((iteration, Vec::new()));
        while self.buckets.len() > self.retain {
            self.buckets.pop_front();
        }
    }

    pub fn push(&mut self, t: Transition) {
        self.buckets
            .back_mut()
            .expect("begin_iteration before push")
            .1
            .push(t);
    }

    pub fn len(&self) -> usize {
        self.buckets.iter().map(|(_, b)| b.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Iterations currently retained, oldest first.
    pub fn retained_iterations(&self) -> Vec<usize> {
        self.buckets.iter().map(|(i, _)| *i).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.buckets.iter().flat_map(|(_, b)| b.iter())
    }

    /// Flat view of every retained transition, bucket order then insertion
    /// order — the indexable base the epoch shuffle permutes.
    pub fn flatten(&self) -> Vec<&Transition> {
        self.iter().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn t(tag: usize) -> Transition {
        Transition {
            s: PixelTensor::new(vec![tag as u8], vec![1, 1, 1]),
            a: 0,
            r: 0.0,
            s_next: PixelTensor::new(vec![tag as u8], vec![1, 1, 1]),
            terminated: false,
        }
    }

    #[test]
    fn retains_last_u_iterations() {
        let mut mem = ReplayMemory::new(3);
        for k in 1..=6 {
            mem.begin_iteration(k);
            for _ in 0..10 {
                mem.push(t(k));
            }
            let kept = mem.retained_iterations();
            let lo = k.saturating_sub(2).max(1);
            assert_eq!(kept, (lo..=k).collect::<Vec<_>>(), "after iteration {k}");
            assert_eq!(mem.len(), 10 * kept.len());
        }
    }

    #[test]
    fn flatten_preserves_order() {
        let mut mem = ReplayMemory::new(2);
        mem.begin_iteration(1);
        mem.push(t(1));
        mem.push(t(2));
        mem.begin_iteration(2);
        mem.push(t(3));
        let tags: Vec<u8> = mem.flatten().iter().map(|tr| tr.s.data[0]).collect();
        assert_eq!(tags, vec![1, 2, 3]);
    }
}
