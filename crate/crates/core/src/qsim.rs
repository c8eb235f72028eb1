//! Dense statevector simulation.
//!
//! Qubit 0 is the most significant bit of the amplitude index: on three qubits
//! the basis state `|q0 q1 q2⟩ = |100⟩` lives at index 4. Every encoding,
//! measurement and transform in the crate uses this convention.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::ops::Range;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Largest register the simulator will allocate (2^14 amplitudes).
pub const MAX_QUBITS: usize = 14;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

fn check_capacity(n_qubits: usize) -> Result<()> {
    if n_qubits == 0 || n_qubits > MAX_QUBITS {
        return Err(Error::Capacity {
            requested: n_qubits,
            cap: MAX_QUBITS,
        });
    }
    Ok(())
}

/// A single quantum gate with its target qubits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Gate {
    X(usize),
    H(usize),
    Ry(usize, f64),
    Rz(usize, f64),
    Cnot { control: usize, target: usize },
    /// Phase `e^{iθ}` on the `|11⟩` component of the two qubits.
    CPhase { control: usize, target: usize, angle: f64 },
    Swap(usize, usize),
}

impl Gate {
    /// Qubits acted on, in the order that defines the local matrix basis
    /// (first listed qubit is the most significant local bit).
    pub fn targets(&self) -> Vec<usize> {
        match *self {
            Gate::X(q) | Gate::H(q) | Gate::Ry(q, _) | Gate::Rz(q, _) => vec![q],
            Gate::Cnot { control, target } | Gate::CPhase { control, target, .. } => {
                vec![control, target]
            }
            Gate::Swap(a, b) => vec![a, b],
        }
    }

    pub fn arity(&self) -> usize {
        match self {
            Gate::X(_) | Gate::H(_) | Gate::Ry(..) | Gate::Rz(..) => 1,
            _ => 2,
        }
    }

    pub fn validate(&self, n_qubits: usize) -> Result<()> {
        let targets = self.targets();
        for &q in &targets {
            if q >= n_qubits {
                return Err(Error::Index {
                    index: q,
                    limit: n_qubits,
                });
            }
        }
        if targets.len() == 2 && targets[0] == targets[1] {
            return Err(Error::arg(format!(
                "two-qubit gate needs distinct qubits, got {0} twice",
                targets[0]
            )));
        }
        Ok(())
    }

    /// Dense `2^k × 2^k` matrix of the gate over its own targets, row-major.
    pub fn matrix(&self) -> Vec<Vec<Complex64>> {
        match *self {
            Gate::X(_) => vec![vec![ZERO, ONE], vec![ONE, ZERO]],
            Gate::H(_) => {
                let h = Complex64::new(FRAC_1_SQRT_2, 0.0);
                vec![vec![h, h], vec![h, -h]]
            }
            Gate::Ry(_, theta) => {
                let (s, c) = (theta / 2.0).sin_cos();
                vec![
                    vec![Complex64::new(c, 0.0), Complex64::new(-s, 0.0)],
                    vec![Complex64::new(s, 0.0), Complex64::new(c, 0.0)],
                ]
            }
            Gate::Rz(_, theta) => vec![
                vec![Complex64::from_polar(1.0, -theta / 2.0), ZERO],
                vec![ZERO, Complex64::from_polar(1.0, theta / 2.0)],
            ],
            Gate::Cnot { .. } => permutation_matrix(&[0, 1, 3, 2]),
            Gate::Swap(..) => permutation_matrix(&[0, 2, 1, 3]),
            Gate::CPhase { angle, .. } => {
                let mut m = permutation_matrix(&[0, 1, 2, 3]);
                m[3][3] = Complex64::from_polar(1.0, angle);
                m
            }
        }
    }
}

fn permutation_matrix(rows: &[usize]) -> Vec<Vec<Complex64>> {
    rows.iter()
        .map(|&col| {
            let mut row = vec![ZERO; rows.len()];
            row[col] = ONE;
            row
        })
        .collect()
}

/// Complex amplitudes of an `n`-qubit register.
#[derive(Debug, Clone, PartialEq)]
pub struct Statevector {
    n_qubits: usize,
    amplitudes: Vec<Complex64>,
}

impl Statevector {
    /// The all-zeros state `|0…0⟩`.
    pub fn zero(n_qubits: usize) -> Result<Self> {
        check_capacity(n_qubits)?;
        let mut amplitudes = vec![ZERO; 1 << n_qubits];
        amplitudes[0] = ONE;
        Ok(Self {
            n_qubits,
            amplitudes,
        })
    }

    /// Wraps caller-supplied amplitudes. The vector must have power-of-two
    /// length and unit norm (within 1e-8).
    pub fn from_amplitudes(amplitudes: Vec<Complex64>) -> Result<Self> {
        let len = amplitudes.len();
        if len < 2 || !len.is_power_of_two() {
            return Err(Error::arg(format!(
                "amplitude count {len} is not a power of two ≥ 2"
            )));
        }
        let n_qubits = len.trailing_zeros() as usize;
        check_capacity(n_qubits)?;
        let norm: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum();
        if (norm - 1.0).abs() > 1e-8 {
            return Err(Error::arg(format!("state norm² is {norm}, expected 1")));
        }
        Ok(Self {
            n_qubits,
            amplitudes,
        })
    }

    /// Basis encoding: X on every qubit whose bit is 1.
    pub fn from_bits(bits: &[u8]) -> Result<Self> {
        if bits.is_empty() {
            return Err(Error::arg("cannot encode an empty bitstring"));
        }
        let mut state = Self::zero(bits.len())?;
        for (q, &b) in bits.iter().enumerate() {
            match b {
                0 => {}
                1 => state.apply(&Gate::X(q))?,
                other => return Err(Error::arg(format!("bit {q} has value {other}"))),
            }
        }
        Ok(state)
    }

    /// Angle encoding: qubit `i` is prepared by `RY(π·values[i])` from `|0⟩`.
    pub fn from_angles(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::arg("cannot encode an empty value list"));
        }
        if let Some((i, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(Error::arg(format!("value {i} = {v} outside [0, 1]")));
        }
        check_capacity(values.len())?;
        // Product state: amplitude of index k is Π_q (cos or sin of qubit q's half angle).
        let factors: Vec<(f64, f64)> = values
            .iter()
            .map(|v| {
                let (s, c) = (PI * v / 2.0).sin_cos();
                (c, s)
            })
            .collect();
        let n = values.len();
        let amplitudes = (0..1usize << n)
            .map(|k| {
                let re = factors.iter().enumerate().fold(1.0, |acc, (q, &(c, s))| {
                    if k >> (n - 1 - q) & 1 == 1 {
                        acc * s
                    } else {
                        acc * c
                    }
                });
                Complex64::new(re, 0.0)
            })
            .collect();
        Ok(Self {
            n_qubits: n,
            amplitudes,
        })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    fn mask(&self, qubit: usize) -> usize {
        1 << (self.n_qubits - 1 - qubit)
    }

    /// Applies `gate` in place.
    pub fn apply(&mut self, gate: &Gate) -> Result<()> {
        gate.validate(self.n_qubits)?;
        match *gate {
            Gate::X(q) => {
                let m = self.mask(q);
                for i in (0..self.amplitudes.len()).filter(|i| i & m == 0) {
                    self.amplitudes.swap(i, i | m);
                }
            }
            Gate::H(q) | Gate::Ry(q, _) | Gate::Rz(q, _) => {
                let u = gate.matrix();
                self.apply_single(q, [[u[0][0], u[0][1]], [u[1][0], u[1][1]]]);
            }
            Gate::Cnot { control, target } => {
                let (c, t) = (self.mask(control), self.mask(target));
                for i in (0..self.amplitudes.len()).filter(|i| i & c != 0 && i & t == 0) {
                    self.amplitudes.swap(i, i | t);
                }
            }
            Gate::CPhase {
                control,
                target,
                angle,
            } => {
                let both = self.mask(control) | self.mask(target);
                let phase = Complex64::from_polar(1.0, angle);
                for (i, a) in self.amplitudes.iter_mut().enumerate() {
                    if i & both == both {
                        *a *= phase;
                    }
                }
            }
            Gate::Swap(a, b) => {
                let (ma, mb) = (self.mask(a), self.mask(b));
                for i in (0..self.amplitudes.len()).filter(|i| i & ma != 0 && i & mb == 0) {
                    self.amplitudes.swap(i, (i & !ma) | mb);
                }
            }
        }
        Ok(())
    }

    fn apply_single(&mut self, qubit: usize, u: [[Complex64; 2]; 2]) {
        let m = self.mask(qubit);
        for i0 in 0..self.amplitudes.len() {
            if i0 & m != 0 {
                continue;
            }
            let i1 = i0 | m;
            let (a0, a1) = (self.amplitudes[i0], self.amplitudes[i1]);
            self.amplitudes[i0] = u[0][0] * a0 + u[0][1] * a1;
            self.amplitudes[i1] = u[1][0] * a0 + u[1][1] * a1;
        }
    }

    /// Value-style gate application.
    pub fn applied(mut self, gate: &Gate) -> Result<Self> {
        self.apply(gate)?;
        Ok(self)
    }

    /// Quantum Fourier transform on the contiguous qubit range, including the
    /// final qubit reversal.
    pub fn qft(&mut self, qubits: Range<usize>) -> Result<()> {
        for gate in qft_gates(qubits)? {
            self.apply(&gate)?;
        }
        Ok(())
    }

    /// `|amplitude_i|²` for every basis index.
    pub fn probabilities(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|a| a.norm_sqr()).collect()
    }

    /// `P(qubit = 0) − P(qubit = 1)`.
    pub fn expectation_z(&self, qubit: usize) -> Result<f64> {
        if qubit >= self.n_qubits {
            return Err(Error::Index {
                index: qubit,
                limit: self.n_qubits,
            });
        }
        let m = self.mask(qubit);
        Ok(self
            .amplitudes
            .iter()
            .enumerate()
            .map(|(i, a)| if i & m == 0 { a.norm_sqr() } else { -a.norm_sqr() })
            .sum())
    }

    /// Z expectation of every qubit, in qubit order.
    pub fn expectations_z(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n_qubits];
        for (i, a) in self.amplitudes.iter().enumerate() {
            let p = a.norm_sqr();
            for (q, e) in out.iter_mut().enumerate() {
                if i >> (self.n_qubits - 1 - q) & 1 == 0 {
                    *e += p;
                } else {
                    *e -= p;
                }
            }
        }
        out
    }

    /// Draws one basis outcome. Qubit 0 is the first character.
    pub fn sample_bits(&self, seed: u64) -> String {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let index = self.sample_index(&mut rng);
        (0..self.n_qubits)
            .map(|q| {
                if index >> (self.n_qubits - 1 - q) & 1 == 1 {
                    '1'
                } else {
                    '0'
                }
            })
            .collect()
    }

    fn sample_index<R: Rng>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut last_nonzero = 0;
        for (i, a) in self.amplitudes.iter().enumerate() {
            let p = a.norm_sqr();
            if p > 0.0 {
                last_nonzero = i;
            }
            acc += p;
            if u < acc {
                return i;
            }
        }
        // Rounding left the cumulative sum a hair below u.
        last_nonzero
    }
}

/// Gate sequence realizing the DFT `F[j][k] = e^{2πi·jk/N}/√N` on the
/// sub-index formed by `qubits` (first qubit most significant).
pub fn qft_gates(qubits: Range<usize>) -> Result<Vec<Gate>> {
    if qubits.is_empty() {
        return Err(Error::arg("QFT over an empty qubit range"));
    }
    let start = qubits.start;
    let m = qubits.len();
    let mut gates = Vec::with_capacity(m * (m + 1) / 2 + m / 2);
    for j in 0..m {
        gates.push(Gate::H(start + j));
        for k in j + 1..m {
            gates.push(Gate::CPhase {
                control: start + k,
                target: start + j,
                angle: 2.0 * PI / (1u64 << (k - j + 1)) as f64,
            });
        }
    }
    for j in 0..m / 2 {
        gates.push(Gate::Swap(start + j, start + m - 1 - j));
    }
    Ok(gates)
}

/// An ordered gate list over a fixed register width.
#[derive(Debug, Clone, PartialEq)]
pub struct Circuit {
    n_qubits: usize,
    ops: Vec<Gate>,
}

impl Circuit {
    pub fn new(n_qubits: usize) -> Result<Self> {
        check_capacity(n_qubits)?;
        Ok(Self {
            n_qubits,
            ops: Vec::new(),
        })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn ops(&self) -> &[Gate] {
        &self.ops
    }

    pub fn push(&mut self, gate: Gate) -> Result<()> {
        gate.validate(self.n_qubits)?;
        self.ops.push(gate);
        Ok(())
    }

    pub fn append_qft(&mut self, qubits: Range<usize>) -> Result<()> {
        for gate in qft_gates(qubits)? {
            self.push(gate)?;
        }
        Ok(())
    }

    /// Runs the circuit on `state` in place.
    pub fn run(&self, state: &mut Statevector) -> Result<()> {
        if state.n_qubits() != self.n_qubits {
            return Err(Error::arg(format!(
                "circuit on {} qubits applied to a {}-qubit state",
                self.n_qubits,
                state.n_qubits()
            )));
        }
        for gate in &self.ops {
            state.apply(gate)?;
        }
        Ok(())
    }
}
