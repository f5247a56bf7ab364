use std::ops::Range;

use super::Backend;
use crate::error::{Error, Result};

/// A monomorphized kernel variant: `(context, first index, output chunk)`.
pub type SpecializedKernel<C, T> = fn(&C, usize, &mut [T]);

/// Finite sets of integer options plus one selected runtime value per set.
///
/// Variants are stored densely by mixed-radix case index, first set most
/// significant: `[0,1,2,3] x [0,1]` with selection `(2,1)` is case `2*2+1`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OptionTable {
    sets: Vec<Vec<i32>>,
    selected: Vec<i32>,
}

impl OptionTable {
    /// Every set must be non-empty. The first value of each set is selected.
    pub fn new(sets: Vec<Vec<i32>>) -> OptionTable {
        assert!(sets.iter().all(|s| !s.is_empty()), "option sets must be non-empty");
        let selected = sets.iter().map(|s| s[0]).collect();
        OptionTable { sets, selected }
    }

    /// Stores the runtime selection; membership is checked at dispatch.
    pub fn select(&mut self, values: &[i32]) {
        assert_eq!(values.len(), self.sets.len(), "one value per option set");
        self.selected = values.to_vec();
    }

    pub fn selected(&self) -> &[i32] {
        &self.selected
    }

    pub fn sets(&self) -> &[Vec<i32>] {
        &self.sets
    }

    pub fn num_variants(&self) -> usize {
        self.sets.iter().map(|s| s.len()).product()
    }

    pub fn case_index(&self) -> Result<usize> {
        let mut idx = 0;
        for (k, (set, &v)) in self.sets.iter().zip(&self.selected).enumerate() {
            let pos = set.iter().position(|&x| x == v).ok_or(Error::InvalidOption { set: k, value: v })?;
            idx = idx * set.len() + pos;
        }
        Ok(idx)
    }

    /// Option values of case `index`.
    pub fn case_values(&self, mut index: usize) -> Vec<i32> {
        let mut out = vec![0; self.sets.len()];
        for (k, set) in self.sets.iter().enumerate().rev() {
            out[k] = set[index % set.len()];
            index /= set.len();
        }
        out
    }
}

impl Backend {
    /// Runs the variant matching the table's selection over `out`, split into
    /// chunks. `variants` must hold one entry per case, in case-index order
    /// (see [`specialized_variants!`](crate::specialized_variants)). Returns
    /// the case index. An invalid selection fails before anything runs.
    pub fn dispatch_specialized<C: Sync, T: Send>(
        &self,
        table: &OptionTable,
        variants: &[SpecializedKernel<C, T>],
        ctx: &C,
        out: &mut [T],
    ) -> Result<usize> {
        if variants.len() != table.num_variants() {
            return Err(Error::VariantCount { expected: table.num_variants(), got: variants.len() });
        }
        let case = table.case_index()?;
        let kernel = variants[case];
        let n = out.len();
        let nchunks = self.elementwise_chunks(n);
        let mut pieces: Vec<(usize, &mut [T])> = Vec::with_capacity(nchunks);
        let mut rest = out;
        for c in 0..nchunks {
            let Range { start, end } = super::chunk_bounds(n, nchunks, c);
            let (head, tail) = rest.split_at_mut(end - start);
            pieces.push((start, head));
            rest = tail;
        }
        self.for_each_mut(&mut pieces, |_, (start, chunk)| kernel(ctx, *start, chunk));
        Ok(case)
    }
}

/// Builds the dense variant table of a const-generic kernel for every
/// combination of the listed option values, in case-index order.
///
/// ```
/// use miniamr::kernels::SpecializedKernel;
/// fn probe<const A: i32, const B: i32>(_: &(), _: usize, out: &mut [i32]) {
///     out.fill(10 * A + B);
/// }
/// let v: Vec<SpecializedKernel<(), i32>> =
///     miniamr::specialized_variants!(probe: SpecializedKernel<(), i32>; [0, 1, 2, 3], [0, 1]);
/// assert_eq!(v.len(), 8);
/// ```
#[macro_export]
macro_rules! specialized_variants {
    ($f:ident : $ty:ty; [$($a:literal),+ $(,)?]) => {{
        let v: ::std::vec::Vec<$ty> = ::std::vec![$($f::<$a> as $ty),+];
        v
    }};
    ($f:ident : $ty:ty; [$($a:literal),+ $(,)?], $bs:tt) => {{
        let mut v: ::std::vec::Vec<$ty> = ::std::vec::Vec::new();
        $( $crate::specialized_variants!(@two v, $f, $ty, $a; $bs); )+
        v
    }};
    ($f:ident : $ty:ty; [$($a:literal),+ $(,)?], $bs:tt, $cs:tt) => {{
        let mut v: ::std::vec::Vec<$ty> = ::std::vec::Vec::new();
        $( $crate::specialized_variants!(@three_a v, $f, $ty, $a; $bs; $cs); )+
        v
    }};
    (@two $v:ident, $f:ident, $ty:ty, $a:literal; [$($b:literal),+ $(,)?]) => {
        $( $v.push($f::<$a, $b> as $ty); )+
    };
    (@three_a $v:ident, $f:ident, $ty:ty, $a:literal; [$($b:literal),+ $(,)?]; $cs:tt) => {
        $( $crate::specialized_variants!(@three_b $v, $f, $ty, $a, $b; $cs); )+
    };
    (@three_b $v:ident, $f:ident, $ty:ty, $a:literal, $b:literal; [$($c:literal),+ $(,)?]) => {
        $( $v.push($f::<$a, $b, $c> as $ty); )+
    };
}

#[cfg(test)]
#[allow(clippy::vec_init_then_push)]
mod tests {
    use super::*;

    fn probe<const A: i32, const B: i32>(_: &(), _: usize, out: &mut [i32]) {
        out.fill(10 * A + B);
    }

    fn probe3<const A: i32, const B: i32, const C: i32>(_: &(), start: usize, out: &mut [i32]) {
        for (k, o) in out.iter_mut().enumerate() {
            *o = 100 * A + 10 * B + C + 1000 * (start + k) as i32;
        }
    }

    #[test]
    fn case_index_is_mixed_radix() {
        let mut t = OptionTable::new(vec![vec![0, 1, 2, 3], vec![0, 1]]);
        assert_eq!(t.num_variants(), 8);
        t.select(&[2, 1]);
        assert_eq!(t.case_index().unwrap(), 5);
        assert_eq!(t.case_values(5), vec![2, 1]);
        t.select(&[4, 0]);
        assert_eq!(t.case_index(), Err(Error::InvalidOption { set: 0, value: 4 }));
    }

    #[test]
    fn dispatch_every_combination() {
        let v: Vec<SpecializedKernel<(), i32>> =
            crate::specialized_variants!(probe: SpecializedKernel<(), i32>; [0, 1, 2, 3], [0, 1]);
        assert_eq!(v.len(), 8);
        let mut t = OptionTable::new(vec![vec![0, 1, 2, 3], vec![0, 1]]);
        for be in [Backend::serial(), Backend::cpu_parallel(3)] {
            for a in 0..4 {
                for b in 0..2 {
                    t.select(&[a, b]);
                    let mut out = vec![-1; 37];
                    let before = be.launches();
                    be.dispatch_specialized(&t, &v, &(), &mut out).unwrap();
                    assert_eq!(be.launches(), before + 1);
                    assert!(out.iter().all(|&x| x == 10 * a + b));
                }
            }
        }
    }

    #[test]
    fn invalid_selection_fails_before_launch() {
        let v: Vec<SpecializedKernel<(), i32>> =
            crate::specialized_variants!(probe: SpecializedKernel<(), i32>; [0, 1, 2, 3], [0, 1]);
        let mut t = OptionTable::new(vec![vec![0, 1, 2, 3], vec![0, 1]]);
        t.select(&[2, 7]);
        let be = Backend::serial();
        let mut out = vec![0; 4];
        assert!(be.dispatch_specialized(&t, &v, &(), &mut out).is_err());
        assert_eq!(be.launches(), 0);
        assert_eq!(out, vec![0; 4]);
    }

    #[test]
    fn three_sets_and_offsets() {
        let v: Vec<SpecializedKernel<(), i32>> =
            crate::specialized_variants!(probe3: SpecializedKernel<(), i32>; [1, 2], [3, 4, 5], [6, 7]);
        assert_eq!(v.len(), 12);
        let mut t = OptionTable::new(vec![vec![1, 2], vec![3, 4, 5], vec![6, 7]]);
        t.select(&[2, 4, 7]);
        let mut out = vec![0; 10];
        Backend::cpu_parallel(4).dispatch_specialized(&t, &v, &(), &mut out).unwrap();
        for (i, &o) in out.iter().enumerate() {
            assert_eq!(o, 247 + 1000 * i as i32);
        }
    }

    #[test]
    fn single_value_set_is_plain_loop() {
        fn one<const A: i32>(_: &(), _: usize, out: &mut [i32]) {
            out.fill(A);
        }
        let v: Vec<SpecializedKernel<(), i32>> = crate::specialized_variants!(one: SpecializedKernel<(), i32>; [9]);
        let t = OptionTable::new(vec![vec![9]]);
        let mut out = vec![0; 5];
        assert_eq!(Backend::serial().dispatch_specialized(&t, &v, &(), &mut out).unwrap(), 0);
        assert_eq!(out, vec![9; 5]);
    }
}
