use rand::Rng;

use super::Transition;
use crate::error::{ReqError, Result};

/// Fixed-capacity ring buffer; the oldest transitions are overwritten.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    /// Slot the next push writes to once the buffer is full.
    head: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        ReplayBuffer {
            capacity,
            items: Vec::new(),
            head: 0,
        }
    }

    pub fn from_transitions(transitions: Vec<Transition>, capacity: usize) -> Self {
        let mut buffer = ReplayBuffer::new(capacity.max(1));
        for t in transitions {
            buffer.push(t);
        }
        buffer
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.head] = t;
            self.head = (self.head + 1) % self.capacity;
        }
    }

    /// Transition `i` in storage order.
    pub fn get(&self, i: usize) -> &Transition {
        &self.items[i]
    }

    /// Oldest to newest.
    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        let (newer, older) = self.items.split_at(self.head);
        older.iter().chain(newer)
    }

    /// Storage indices drawn uniformly with replacement.
    pub fn sample_indices<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Result<Vec<usize>> {
        if self.items.is_empty() {
            return Err(ReqError::InsufficientData {
                available: 0,
                required: n.max(1),
            });
        }
        Ok((0..n)
            .map(|_| rng.random_range(0..self.items.len()))
            .collect())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Result<Vec<Transition>> {
        Ok(self
            .sample_indices(rng, n)?
            .into_iter()
            .map(|i| self.items[i].clone())
            .collect())
    }

    /// `n` runs of `length` consecutive steps, each inside one episode.
    pub fn sample_sequences<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        n: usize,
        length: usize,
    ) -> Result<Vec<Vec<Transition>>> {
        let ordered: Vec<&Transition> = self.iter().collect();
        let starts: Vec<usize> = (0..ordered.len().saturating_sub(length.max(1) - 1))
            .filter(|&s| {
                (1..length).all(|k| {
                    let (a, b) = (ordered[s + k - 1], ordered[s + k]);
                    a.episode_id == b.episode_id && b.step_index == a.step_index + 1 && !a.terminal
                })
            })
            .collect();
        if starts.is_empty() {
            return Err(ReqError::InsufficientData {
                available: 0,
                required: length,
            });
        }
        Ok((0..n)
            .map(|_| {
                let s = starts[rng.random_range(0..starts.len())];
                ordered[s..s + length]
                    .iter()
                    .map(|t| (*t).clone())
                    .collect()
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learner::Source;

    pub(crate) fn dummy(episode: u64, step: u64) -> Transition {
        Transition {
            observation: vec![episode as f64, step as f64],
            action: vec![0.0],
            reward: 0.0,
            next_observation: vec![episode as f64, step as f64 + 1.0],
            terminal: false,
            source: Source::Policy,
            episode_id: episode,
            step_index: step,
            expert_action: None,
        }
    }

    #[test]
    fn never_exceeds_capacity_and_keeps_newest() {
        let mut b = ReplayBuffer::new(5);
        for i in 0..12 {
            b.push(dummy(0, i));
        }
        assert_eq!(b.len(), 5);
        let steps: Vec<u64> = b.iter().map(|t| t.step_index).collect();
        assert_eq!(steps, vec![7, 8, 9, 10, 11]);
    }

    #[test]
    fn empty_buffer_refuses_to_sample() {
        let b = ReplayBuffer::new(3);
        assert!(matches!(
            b.sample(&mut crate::seeded_rng(0), 4),
            Err(ReqError::InsufficientData { .. })
        ));
    }

    #[test]
    fn sampling_is_uniform() {
        let mut b = ReplayBuffer::new(20);
        for i in 0..20 {
            b.push(dummy(0, i));
        }
        let draws = 100_000;
        let mut counts = [0usize; 20];
        for i in b.sample_indices(&mut crate::seeded_rng(4), draws).unwrap() {
            counts[i] += 1;
        }
        let expected = draws as f64 / 20.0;
        let chi2: f64 = counts
            .iter()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        // 99.9% quantile of chi-square with 19 degrees of freedom.
        assert!(chi2 < 43.82, "{chi2}");
    }

    #[test]
    fn sequences_stay_within_episodes() {
        let mut b = ReplayBuffer::new(100);
        for e in 0..6 {
            for s in 0..(3 + e) {
                b.push(dummy(e, s));
            }
        }
        for seq in b
            .sample_sequences(&mut crate::seeded_rng(1), 200, 4)
            .unwrap()
        {
            assert!(seq.iter().all(|t| t.episode_id == seq[0].episode_id));
            assert!(seq
                .windows(2)
                .all(|w| w[1].step_index == w[0].step_index + 1));
        }
        assert!(b
            .sample_sequences(&mut crate::seeded_rng(1), 1, 20)
            .is_err());
    }
}
