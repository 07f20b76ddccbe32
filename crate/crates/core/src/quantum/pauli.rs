use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::Operator;
use crate::error::{invalid, Error, Result};

/// Single-qubit Pauli operator, ordered I < X < Y < Z.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    pub const ALL: [Pauli; 4] = [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Pauli {
        Self::ALL[i & 3]
    }

    pub fn as_char(self) -> char {
        match self {
            Pauli::I => 'I',
            Pauli::X => 'X',
            Pauli::Y => 'Y',
            Pauli::Z => 'Z',
        }
    }

    pub fn from_char(c: char) -> Option<Pauli> {
        match c {
            'I' | '1' | '𝟙' => Some(Pauli::I),
            'X' => Some(Pauli::X),
            'Y' => Some(Pauli::Y),
            'Z' => Some(Pauli::Z),
            _ => None,
        }
    }

    /// Acts on computational basis bit `b`: returns (flipped bit, phase).
    #[inline]
    fn act(self, b: usize) -> (usize, Complex64) {
        match self {
            Pauli::I => (b, Complex64::new(1.0, 0.0)),
            Pauli::X => (b ^ 1, Complex64::new(1.0, 0.0)),
            Pauli::Y => {
                if b == 0 {
                    (1, Complex64::new(0.0, 1.0))
                } else {
                    (0, Complex64::new(0.0, -1.0))
                }
            }
            Pauli::Z => (b, Complex64::new(if b == 0 { 1.0 } else { -1.0 }, 0.0)),
        }
    }
}

/// Pauli string over `n` qubits. Qubit 0 is the leftmost character and the
/// most significant bit of computational basis indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PauliLabel(Vec<Pauli>);

impl PauliLabel {
    pub fn new(ops: Vec<Pauli>) -> Result<Self> {
        if ops.is_empty() {
            return invalid("empty Pauli label");
        }
        Ok(PauliLabel(ops))
    }

    pub fn identity(n: usize) -> Self {
        PauliLabel(vec![Pauli::I; n.max(1)])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn ops(&self) -> &[Pauli] {
        &self.0
    }

    pub fn get(&self, qubit: usize) -> Pauli {
        self.0[qubit]
    }

    pub fn is_identity(&self) -> bool {
        self.0.iter().all(|&p| p == Pauli::I)
    }

    /// Number of non-identity factors.
    pub fn weight(&self) -> usize {
        self.0.iter().filter(|&&p| p != Pauli::I).count()
    }

    /// Canonical base-4 index (I=0, X=1, Y=2, Z=3, leftmost most significant).
    pub fn index(&self) -> usize {
        self.0.iter().fold(0, |acc, p| acc * 4 + p.index())
    }

    pub fn from_index(index: usize, n: usize) -> Self {
        let mut ops = vec![Pauli::I; n];
        let mut rest = index;
        for slot in ops.iter_mut().rev() {
            *slot = Pauli::from_index(rest % 4);
            rest /= 4;
        }
        PauliLabel(ops)
    }

    /// All 4^n labels in canonical order.
    pub fn all(n: usize) -> impl Iterator<Item = PauliLabel> {
        (0..4usize.pow(n as u32)).map(move |i| PauliLabel::from_index(i, n))
    }

    /// Labels with only X, Y, Z factors (the measurement settings), canonical order.
    pub fn measurement_bases(n: usize) -> Vec<PauliLabel> {
        PauliLabel::all(n).filter(|l| l.weight() == n).collect()
    }

    /// Embeds this label into a larger register, placing factor `k` on qubit `positions[k]`.
    pub fn embed(&self, positions: &[usize], n: usize) -> Result<PauliLabel> {
        if positions.len() != self.len() {
            return invalid("embedding positions do not match label length");
        }
        let mut ops = vec![Pauli::I; n];
        for (&pos, &op) in positions.iter().zip(&self.0) {
            if pos >= n {
                return invalid(format!("qubit {pos} out of range for {n}-qubit register"));
            }
            ops[pos] = op;
        }
        Ok(PauliLabel(ops))
    }

    /// Image of basis state `j` under this Pauli: P|j> = phase |col>.
    #[inline]
    pub fn act(&self, j: usize) -> (usize, Complex64) {
        let n = self.0.len();
        let mut out = 0usize;
        let mut phase = Complex64::new(1.0, 0.0);
        for (q, op) in self.0.iter().enumerate() {
            let shift = n - 1 - q;
            let (b, ph) = op.act((j >> shift) & 1);
            out |= b << shift;
            phase *= ph;
        }
        (out, phase)
    }
}

impl PartialOrd for PauliLabel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for PauliLabel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.len().cmp(&other.0.len()).then_with(|| self.0.cmp(&other.0))
    }
}

impl fmt::Display for PauliLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in &self.0 {
            write!(f, "{}", p.as_char())?;
        }
        Ok(())
    }
}

impl FromStr for PauliLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let ops = s
            .trim()
            .chars()
            .map(|c| {
                Pauli::from_char(c)
                    .ok_or_else(|| Error::InvalidInput(format!("invalid Pauli character {c:?} in {s:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        PauliLabel::new(ops)
    }
}

impl Serialize for PauliLabel {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for PauliLabel {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Dense 2^n x 2^n matrix of a Pauli string.
pub fn pauli_matrix(label: &PauliLabel) -> Operator {
    let dim = 1usize << label.len();
    let mut m = Operator::zeros(dim);
    for j in 0..dim {
        let (i, ph) = label.act(j);
        m[(i, j)] = ph;
    }
    m
}

/// Parses a label and returns its matrix.
pub fn pauli_matrix_str(label: &str) -> Result<Operator> {
    Ok(pauli_matrix(&label.parse()?))
}

/// Tr(A P) for a Pauli string without forming P.
pub fn trace_with_pauli(a: &Operator, label: &PauliLabel) -> Complex64 {
    let dim = a.dim();
    let mut acc = Complex64::new(0.0, 0.0);
    // P|j> = ph |i>  =>  (A P)_{jj} = A_{j i} ph
    for j in 0..dim {
        let (i, ph) = label.act(j);
        acc += a[(j, i)] * ph;
    }
    acc
}

/// Real Pauli coefficients c_L = Tr(H P_L) / 2^n of a Hermitian operator.
pub fn pauli_decompose(h: &Operator, n: usize) -> Result<std::collections::BTreeMap<PauliLabel, f64>> {
    if h.dim() != 1 << n {
        return invalid(format!("operator dimension {} does not match {n} qubits", h.dim()));
    }
    h.ensure_hermitian(1e-10)?;
    let scale = 1.0 / h.dim() as f64;
    Ok(PauliLabel::all(n)
        .map(|l| {
            let c = trace_with_pauli(h, &l).re * scale;
            (l, c)
        })
        .collect())
}

/// Sum of c_L P_L.
pub fn pauli_sum<'a>(terms: impl IntoIterator<Item = (&'a PauliLabel, &'a f64)>, n: usize) -> Operator {
    let dim = 1usize << n;
    let mut m = Operator::zeros(dim);
    for (label, &c) in terms {
        for j in 0..dim {
            let (i, ph) = label.act(j);
            m[(i, j)] += ph * c;
        }
    }
    m
}
