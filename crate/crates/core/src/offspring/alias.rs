//! Walker-Vose alias table for O(1) draws from a finite pmf.

use crate::rng::SimRng;
use rand::Rng;

#[derive(Debug, Clone)]
pub struct AliasTable {
    accept: Vec<f64>,
    alias: Vec<u32>,
}

impl AliasTable {
    /// Builds the table from normalized probabilities.
    pub fn new(probs: &[f64]) -> Self {
        let n = probs.len();
        assert!(n > 0 && n <= u32::MAX as usize);
        let nf = n as f64;
        let mut accept = vec![0.0f64; n];
        let mut alias = vec![0u32; n];
        let mut scaled: Vec<f64> = probs.iter().map(|&p| p * nf).collect();
        let mut small: Vec<u32> = Vec::with_capacity(n);
        let mut large: Vec<u32> = Vec::with_capacity(n);
        for (i, &w) in scaled.iter().enumerate() {
            if w < 1.0 {
                small.push(i as u32);
            } else {
                large.push(i as u32);
            }
        }
        while let (Some(&s), Some(&l)) = (small.last(), large.last()) {
            small.pop();
            accept[s as usize] = scaled[s as usize];
            alias[s as usize] = l;
            scaled[l as usize] -= 1.0 - scaled[s as usize];
            if scaled[l as usize] < 1.0 {
                large.pop();
                small.push(l);
            }
        }
        // Leftovers are within rounding of 1.
        for &i in small.iter().chain(large.iter()) {
            accept[i as usize] = 1.0;
        }
        Self { accept, alias }
    }

    /// Draws an index distributed according to the construction pmf.
    #[inline]
    pub fn sample(&self, rng: &mut SimRng) -> usize {
        let i = rng.random_range(0..self.accept.len());
        if rng.random::<f64>() < self.accept[i] {
            i
        } else {
            self.alias[i] as usize
        }
    }
}
