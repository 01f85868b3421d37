//! Portable sort3 kernels and the reference sort they are checked against.
//!
//! The selects below are written as `if flag { x } else { y }` pairs on
//! locals, load/flag/select/store, so the compiler is free to emit `cmov`.
//! Keep that shape when editing; `min`/`max` helpers would hide it.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Which comparison a sorter applies to its 32-bit inputs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Order {
    #[default]
    Signed,
    Unsigned,
}

impl Order {
    #[inline(always)]
    pub fn less(self, x: i32, y: i32) -> bool {
        match self {
            Order::Signed => x < y,
            Order::Unsigned => (x as u32) < (y as u32),
        }
    }
}

impl fmt::Display for Order {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Order::Signed => "signed",
            Order::Unsigned => "unsigned",
        })
    }
}

impl FromStr for Order {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "signed" => Ok(Order::Signed),
            "unsigned" => Ok(Order::Unsigned),
            other => Err(format!("unknown ordering `{other}` (expected signed or unsigned)")),
        }
    }
}

/// Scatter table for [`sort3_table`]: three 8-entry blocks, one per input,
/// indexed by the packed comparison outcome plus 4. Entries equal to 9 sit
/// at outcomes that no consistent ordering can produce.
pub const DEST: [i8; 24] = [
    1, 2, 9, 2, 0, 9, 0, 1, //
    0, 0, 9, 1, 1, 9, 2, 2, //
    2, 1, 9, 0, 2, 9, 1, 0,
];

/// Three compare-exchanges on (1,2), (0,2), (0,1), branch-free, signed.
#[inline]
pub fn sort3_network(buffer: &mut [i32; 3]) {
    let mut a = buffer[0];
    let mut b = buffer[1];
    let mut c = buffer[2];

    let flag = c < b;
    let d = b;
    b = if flag { c } else { b };
    c = if flag { d } else { c };

    let flag = c < a;
    let d = a;
    a = if flag { c } else { a };
    c = if flag { d } else { c };
    buffer[2] = c;

    let flag = b < a;
    let d = a;
    a = if flag { b } else { a };
    b = if flag { d } else { b };
    buffer[0] = a;
    buffer[1] = b;
}

/// Sort (a, b) by select; while the third element is smaller than b, rotate
/// it in and go again. Signed.
#[inline]
#[allow(clippy::manual_swap)]
pub fn sort3_loop(p: &mut [i32; 3]) {
    let mut a = p[0];
    let mut b = p[1];
    loop {
        let c = a;
        let flag = b < a;
        a = if flag { b } else { a };
        b = if flag { c } else { b };
        let flag = p[2] < b;
        if !flag {
            break;
        }
        let c = b;
        b = p[2];
        p[2] = c;
    }
    p[0] = a;
    p[1] = b;
}

/// Packed comparison outcome `-4[b<a] + 2[c<b] + [c<a]` and the slots the
/// three inputs are scattered to.
#[inline]
pub fn table_destinations(p: &[i32; 3], order: Order) -> (i64, [usize; 3]) {
    let (a, b, c) = (p[0], p[1], p[2]);
    let mut i = -(order.less(b, a) as i64);
    i = 2 * i + order.less(c, b) as i64;
    i = 2 * i + order.less(c, a) as i64;
    let at = |base: i64| DEST[(i + base) as usize] as usize;
    (i, [at(4), at(12), at(20)])
}

#[inline]
pub fn sort3_table(p: &mut [i32; 3], order: Order) {
    let (a, b, c) = (p[0], p[1], p[2]);
    let (_, [ja, jb, jc]) = table_destinations(p, order);
    p[ja] = a;
    p[jb] = b;
    p[jc] = c;
}

/// Insertion sort; the reference every other sorter is checked against.
pub fn oracle_sort(p: &mut [i32], order: Order) {
    for k in 1..p.len() {
        let mut j = k;
        while j > 0 && order.less(p[j], p[j - 1]) {
            p.swap(j, j - 1);
            j -= 1;
        }
    }
}

/// Two-element select sort, signed. Ground truth for sort2 searches.
#[inline]
pub fn sort2_select(p: &mut [i32; 2]) {
    let mut a = p[0];
    let mut b = p[1];
    let flag = b < a;
    let d = a;
    a = if flag { b } else { a };
    b = if flag { d } else { b };
    p[0] = a;
    p[1] = b;
}

/// The registered in-process sorters.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kernel {
    Network,
    Loop,
    Table,
    Oracle,
    Sort2,
}

impl Kernel {
    pub const ALL: [Kernel; 5] = [
        Kernel::Network,
        Kernel::Loop,
        Kernel::Table,
        Kernel::Oracle,
        Kernel::Sort2,
    ];

    pub const fn name(self) -> &'static str {
        match self {
            Kernel::Network => "network",
            Kernel::Loop => "loop",
            Kernel::Table => "table",
            Kernel::Oracle => "oracle",
            Kernel::Sort2 => "sort2",
        }
    }

    pub fn from_name(name: &str) -> Option<Kernel> {
        Kernel::ALL.into_iter().find(|k| k.name() == name)
    }

    pub const fn arity(self) -> usize {
        match self {
            Kernel::Sort2 => 2,
            _ => 3,
        }
    }

    /// The ordering the kernel hard-codes, or `None` if it follows the
    /// requested one.
    pub const fn native_order(self) -> Option<Order> {
        match self {
            Kernel::Network | Kernel::Loop | Kernel::Sort2 => Some(Order::Signed),
            Kernel::Table | Kernel::Oracle => None,
        }
    }

    /// Sorts `values` in place. Panics if the length is not the kernel's arity.
    pub fn sort(self, values: &mut [i32], order: Order) {
        match self {
            Kernel::Network => sort3_network(values.try_into().expect("sort3 kernel needs 3 values")),
            Kernel::Loop => sort3_loop(values.try_into().expect("sort3 kernel needs 3 values")),
            Kernel::Table => sort3_table(values.try_into().expect("sort3 kernel needs 3 values"), order),
            Kernel::Oracle => oracle_sort(values, order),
            Kernel::Sort2 => sort2_select(values.try_into().expect("sort2 kernel needs 2 values")),
        }
    }
}

impl fmt::Display for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sorted(f: impl Fn(&mut [i32; 3]), mut t: [i32; 3]) -> [i32; 3] {
        f(&mut t);
        t
    }

    #[test]
    fn network_examples() {
        assert_eq!(sorted(sort3_network, [1, 2, 3]), [1, 2, 3]);
        assert_eq!(sorted(sort3_network, [3, 2, 1]), [1, 2, 3]);
    }

    #[test]
    fn loop_examples() {
        assert_eq!(sorted(sort3_loop, [2, 1, 0]), [0, 1, 2]);
        assert_eq!(sorted(sort3_loop, [0, 0, 0]), [0, 0, 0]);
        assert_eq!(sorted(sort3_loop, [-5, 7, -5]), [-5, -5, 7]);
    }

    #[test]
    fn table_examples() {
        assert_eq!(table_destinations(&[0, 1, 2], Order::Signed), (0, [0, 1, 2]));
        assert_eq!(table_destinations(&[3, 1, 2], Order::Signed), (-3, [2, 0, 1]));
        assert_eq!(sorted(|t| sort3_table(t, Order::Signed), [3, 1, 2]), [1, 2, 3]);
        let max = u32::MAX as i32;
        assert_eq!(sorted(|t| sort3_table(t, Order::Unsigned), [max, 0, 0]), [0, 0, max]);
    }

    #[test]
    fn oracle_examples() {
        let run = |mut t: [i32; 3], o| {
            oracle_sort(&mut t, o);
            t
        };
        assert_eq!(run([2, 0, 1], Order::Signed), [0, 1, 2]);
        assert_eq!(run([1, 1, 0], Order::Signed), [0, 1, 1]);
        assert_eq!(run([-1, 0, 0], Order::Unsigned), [0, 0, -1]);
    }

    #[test]
    fn sort2_examples() {
        for (input, expect) in [([0, 0], [0, 0]), ([1, 0], [0, 1]), ([i32::MIN, -1], [i32::MIN, -1])] {
            let mut t = input;
            sort2_select(&mut t);
            assert_eq!(t, expect);
        }
    }

    #[test]
    fn registry_names_roundtrip() {
        for k in Kernel::ALL {
            assert_eq!(Kernel::from_name(k.name()), Some(k));
        }
        assert_eq!(Kernel::from_name("bogus"), None);
    }

    #[test]
    fn exhaustive_small_grid() {
        let vals = -2..=2;
        for a in vals.clone() {
            for b in vals.clone() {
                for c in vals.clone() {
                    let mut want = [a, b, c];
                    oracle_sort(&mut want, Order::Signed);
                    assert_eq!(sorted(sort3_network, [a, b, c]), want);
                    assert_eq!(sorted(sort3_loop, [a, b, c]), want);
                    assert_eq!(sorted(|t| sort3_table(t, Order::Signed), [a, b, c]), want);
                }
            }
        }
    }
}
