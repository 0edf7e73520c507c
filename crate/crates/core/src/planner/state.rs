/// A set of true atoms stored as a fixed-width bitset.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct State(Box<[u64]>);

impl State {
    pub fn empty(n_atoms: usize) -> Self {
        State(vec![0; n_atoms.div_ceil(64)].into_boxed_slice())
    }

    pub fn from_indices(n_atoms: usize, idx: &[usize]) -> Self {
        let mut s = Self::empty(n_atoms);
        for &i in idx {
            s.insert(i);
        }
        s
    }

    #[inline]
    pub fn contains(&self, i: usize) -> bool {
        self.0[i / 64] >> (i % 64) & 1 == 1
    }

    #[inline]
    pub fn insert(&mut self, i: usize) {
        self.0[i / 64] |= 1 << (i % 64);
    }

    #[inline]
    pub fn remove(&mut self, i: usize) {
        self.0[i / 64] &= !(1 << (i % 64));
    }

    pub fn iter_ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().enumerate().flat_map(|(w, &bits)| {
            (0..64).filter(move |b| bits >> b & 1 == 1).map(move |b| w * 64 + b)
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn set_operations() {
        let mut s = State::from_indices(130, &[0, 64, 129]);
        assert!(s.contains(64) && s.contains(129) && !s.contains(1));
        s.remove(64);
        s.insert(3);
        assert_eq!(s.iter_ones().collect::<Vec<_>>(), vec![0, 3, 129]);
    }
}
