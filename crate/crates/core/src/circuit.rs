//! Arithmetic circuits: an append-only gate tape over a field, with
//! evaluation, the reverse-mode derivative transform, and transposition of
//! linear circuits.
//!
//! Circuits are immutable once built; construction goes through
//! [`CircuitBuilder`], which folds constant subexpressions at append time so
//! that structurally dead branches (multiplications by a zero constant,
//! additions of zero) never reach the tape.

use crate::error::{Error, Result};
use crate::field::{Elem, FieldCtx};
use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

/// Label namespace for circuit inputs and outputs.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub enum Ns {
    X,
    Y,
    Z,
    W,
    V,
    DX,
    DY,
    DZ,
    DW,
    DV,
}

/// A named input or output port: a namespace plus an integer index.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Label {
    pub ns: Ns,
    pub index: i64,
}

impl std::fmt::Debug for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:?}({})", self.ns, self.index)
    }
}

impl Label {
    pub fn x(i: i64) -> Label {
        Label { ns: Ns::X, index: i }
    }
    pub fn y(i: i64) -> Label {
        Label { ns: Ns::Y, index: i }
    }
    pub fn z(i: i64) -> Label {
        Label { ns: Ns::Z, index: i }
    }
    pub fn w(i: i64) -> Label {
        Label { ns: Ns::W, index: i }
    }
    pub fn v(i: i64) -> Label {
        Label { ns: Ns::V, index: i }
    }

    /// The label of the derivative output associated with this input.
    pub fn deriv(self) -> Label {
        let ns = match self.ns {
            Ns::X => Ns::DX,
            Ns::Y => Ns::DY,
            Ns::Z => Ns::DZ,
            Ns::W => Ns::DW,
            Ns::V => Ns::DV,
            other => other,
        };
        Label { ns, index: self.index }
    }
}

/// Reference to an earlier tape position.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct GateRef(pub u32);

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
#[repr(u8)]
pub enum GateKind {
    Input = 0,
    Const = 1,
    Add = 2,
    Sub = 3,
    Mul = 4,
    Div = 5,
}

/// Total assignment of field elements to input labels.
#[derive(Clone, Debug, Default)]
pub struct Assignment {
    map: BTreeMap<Label, Elem>,
}

impl Assignment {
    pub fn new() -> Assignment {
        Assignment::default()
    }

    pub fn set(&mut self, label: Label, value: Elem) {
        self.map.insert(label, value);
    }

    pub fn get(&self, label: &Label) -> Option<&Elem> {
        self.map.get(label)
    }
}

/// An immutable arithmetic circuit: a topologically ordered gate tape plus
/// labeled inputs and outputs.
#[derive(Clone, Debug)]
pub struct Circuit {
    field: Arc<FieldCtx>,
    kinds: Vec<GateKind>,
    ops: Vec<[u32; 2]>,
    consts: Vec<Elem>,
    /// Sorted by label.
    inputs: Vec<(Label, GateRef)>,
    /// Insertion order.
    outputs: Vec<(Label, GateRef)>,
    /// Last tape position consuming each gate; `u32::MAX` for outputs.
    last_use: Vec<u32>,
}

impl Circuit {
    pub fn field(&self) -> &Arc<FieldCtx> {
        &self.field
    }

    pub fn gate_count(&self) -> usize {
        self.kinds.len()
    }

    /// Gate count plus edge count.
    pub fn size(&self) -> usize {
        let edges: usize = self
            .kinds
            .iter()
            .map(|k| match k {
                GateKind::Input | GateKind::Const => 0,
                _ => 2,
            })
            .sum();
        self.kinds.len() + edges
    }

    pub fn inputs(&self) -> &[(Label, GateRef)] {
        &self.inputs
    }

    pub fn outputs(&self) -> &[(Label, GateRef)] {
        &self.outputs
    }

    pub fn kind(&self, r: GateRef) -> GateKind {
        self.kinds[r.0 as usize]
    }

    pub fn operands(&self, r: GateRef) -> [u32; 2] {
        self.ops[r.0 as usize]
    }

    /// True iff the tape is topologically ordered with correct arities and
    /// all references in range.
    pub fn validate(&self) -> bool {
        for (i, (&kind, &ops)) in self.kinds.iter().zip(self.ops.iter()).enumerate() {
            match kind {
                GateKind::Input => {}
                GateKind::Const => {
                    if ops[0] as usize >= self.consts.len() {
                        return false;
                    }
                }
                _ => {
                    if ops[0] as usize >= i || ops[1] as usize >= i {
                        return false;
                    }
                }
            }
        }
        for &(_, r) in self.inputs.iter() {
            if r.0 as usize >= self.kinds.len() || self.kinds[r.0 as usize] != GateKind::Input {
                return false;
            }
        }
        self.outputs.iter().all(|&(_, r)| (r.0 as usize) < self.kinds.len())
    }

    /// Evaluate the circuit on a total assignment, returning all outputs.
    pub fn eval(&self, assignment: &Assignment) -> Result<BTreeMap<Label, Elem>> {
        let mut input_values = Vec::with_capacity(self.inputs.len());
        for (label, _) in &self.inputs {
            let v = assignment
                .get(label)
                .ok_or(Error::MissingInput(*label))?;
            input_values.push(v.clone());
        }
        let outs = self.eval_values(&input_values)?;
        Ok(self
            .outputs
            .iter()
            .map(|(l, _)| *l)
            .zip(outs)
            .collect())
    }

    /// Evaluate with input values given in the order of `self.inputs()`.
    /// Returns output values in the order of `self.outputs()`.
    ///
    /// Uses a slot-recycling value slab so peak memory tracks the live
    /// frontier rather than the tape length.
    pub fn eval_values(&self, input_values: &[Vec<u64>]) -> Result<Vec<Elem>> {
        assert_eq!(input_values.len(), self.inputs.len());
        let d = self.field.degree();
        let n = self.kinds.len();
        let mut input_of_gate: HashMap<u32, usize> = HashMap::with_capacity(self.inputs.len());
        for (ord, &(_, r)) in self.inputs.iter().enumerate() {
            input_of_gate.insert(r.0, ord);
        }

        let mut slab: Vec<u64> = Vec::new();
        let mut free: Vec<u32> = Vec::new();
        let mut slot_of: Vec<u32> = vec![u32::MAX; n];
        let mut scratch = vec![0u64; 2 * d];
        let mut tmp = vec![0u64; d];

        macro_rules! alloc_slot {
            () => {
                match free.pop() {
                    Some(s) => s,
                    None => {
                        let s = (slab.len() / d) as u32;
                        slab.resize(slab.len() + d, 0);
                        s
                    }
                }
            };
        }

        for i in 0..n {
            let slot = alloc_slot!();
            let (kind, ops) = (self.kinds[i], self.ops[i]);
            match kind {
                GateKind::Input => {
                    let ord = *input_of_gate
                        .get(&(i as u32))
                        .expect("input gate registered");
                    let v = &input_values[ord];
                    assert_eq!(v.len(), d, "input value has wrong degree");
                    slab[slot as usize * d..(slot as usize + 1) * d].copy_from_slice(v);
                }
                GateKind::Const => {
                    let v = &self.consts[ops[0] as usize];
                    slab[slot as usize * d..(slot as usize + 1) * d].copy_from_slice(v);
                }
                _ => {
                    let (a, b) = (ops[0] as usize, ops[1] as usize);
                    let (sa, sb) = (slot_of[a] as usize, slot_of[b] as usize);
                    debug_assert!(sa != u32::MAX as usize && sb != u32::MAX as usize);
                    let (av, bv) = (sa * d, sb * d);
                    {
                        let a_sl = &slab[av..av + d];
                        let b_sl = &slab[bv..bv + d];
                        match kind {
                            GateKind::Add => self.field.add_slice(&mut tmp, a_sl, b_sl),
                            GateKind::Sub => self.field.sub_slice(&mut tmp, a_sl, b_sl),
                            GateKind::Mul => self.field.mul_slice(&mut tmp, a_sl, b_sl, &mut scratch),
                            GateKind::Div => {
                                if b_sl.iter().all(|&c| c == 0) {
                                    return Err(Error::EvalDivByZero { gate: i });
                                }
                                let inv = self.field.inv(b_sl)?;
                                self.field.mul_slice(&mut tmp, a_sl, &inv, &mut scratch);
                            }
                            _ => unreachable!(),
                        }
                    }
                    slab[slot as usize * d..(slot as usize + 1) * d].copy_from_slice(&tmp);
                    // Free operands whose last consumer is this gate.
                    if self.last_use[a] == i as u32 {
                        free.push(slot_of[a]);
                        slot_of[a] = u32::MAX;
                    }
                    if b != a && self.last_use[b] == i as u32 {
                        free.push(slot_of[b]);
                        slot_of[b] = u32::MAX;
                    }
                }
            }
            slot_of[i] = slot;
        }

        let mut outs = Vec::with_capacity(self.outputs.len());
        for &(_, r) in &self.outputs {
            let s = slot_of[r.0 as usize] as usize;
            assert!(s != u32::MAX as usize, "output slot freed prematurely");
            outs.push(slab[s * d..(s + 1) * d].to_vec());
        }
        Ok(outs)
    }

    /// Versioned binary dump: header `ACIR1`, gate count (8-byte LE), then
    /// per-gate records. Used by golden-structure tests.
    pub fn dump_acir(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(b"ACIR1");
        out.extend_from_slice(&(self.kinds.len() as u64).to_le_bytes());
        for i in 0..self.kinds.len() {
            out.push(self.kinds[i] as u8);
            match self.kinds[i] {
                GateKind::Input => {
                    let (label, _) = self
                        .inputs
                        .iter()
                        .find(|(_, r)| r.0 == i as u32)
                        .expect("registered input");
                    out.push(label.ns as u8);
                    out.extend_from_slice(&label.index.to_le_bytes());
                }
                GateKind::Const => {
                    let v = &self.consts[self.ops[i][0] as usize];
                    out.extend_from_slice(&(v.len() as u64).to_le_bytes());
                    for &c in v {
                        out.extend_from_slice(&c.to_le_bytes());
                    }
                }
                _ => {
                    out.extend_from_slice(&(self.ops[i][0] as u64).to_le_bytes());
                    out.extend_from_slice(&(self.ops[i][1] as u64).to_le_bytes());
                }
            }
        }
        out
    }

    /// Drop gates that no output (transitively) depends on, compacting the
    /// tape. Input gates are always kept so the input surface is stable.
    pub fn eliminate_dead(&self) -> Circuit {
        let n = self.kinds.len();
        let mut live = vec![false; n];
        let mut stack: Vec<u32> = self.outputs.iter().map(|&(_, r)| r.0).collect();
        while let Some(g) = stack.pop() {
            if live[g as usize] {
                continue;
            }
            live[g as usize] = true;
            match self.kinds[g as usize] {
                GateKind::Input | GateKind::Const => {}
                _ => {
                    stack.push(self.ops[g as usize][0]);
                    stack.push(self.ops[g as usize][1]);
                }
            }
        }
        for &(_, r) in &self.inputs {
            live[r.0 as usize] = true;
        }
        let mut map = vec![u32::MAX; n];
        let mut b = CircuitBuilder::new(self.field.clone());
        for i in 0..n {
            if !live[i] {
                continue;
            }
            let r = match self.kinds[i] {
                GateKind::Const => b.constant(self.consts[self.ops[i][0] as usize].clone()),
                kind => {
                    let ops = if matches!(kind, GateKind::Input) {
                        [0, 0]
                    } else {
                        [map[self.ops[i][0] as usize], map[self.ops[i][1] as usize]]
                    };
                    debug_assert!(ops[0] != u32::MAX && ops[1] != u32::MAX);
                    b.push(kind, ops)
                }
            };
            map[i] = r.0;
        }
        for &(l, r) in &self.inputs {
            let nr = GateRef(map[r.0 as usize]);
            b.input_ids.insert(l, nr);
            b.inputs.push((l, nr));
        }
        for &(l, r) in &self.outputs {
            b.outputs.push((l, GateRef(map[r.0 as usize])));
        }
        b.finish()
    }

    fn consumer_csr(&self) -> (Vec<u32>, Vec<u32>) {
        let n = self.kinds.len();
        let mut counts = vec![0u32; n + 1];
        for i in 0..n {
            match self.kinds[i] {
                GateKind::Input | GateKind::Const => {}
                _ => {
                    counts[self.ops[i][0] as usize + 1] += 1;
                    counts[self.ops[i][1] as usize + 1] += 1;
                }
            }
        }
        for i in 0..n {
            counts[i + 1] += counts[i];
        }
        let mut fill = counts.clone();
        let mut edges = vec![0u32; counts[n] as usize];
        for i in 0..n {
            match self.kinds[i] {
                GateKind::Input | GateKind::Const => {}
                _ => {
                    for &o in &self.ops[i] {
                        edges[fill[o as usize] as usize] = i as u32;
                        fill[o as usize] += 1;
                    }
                }
            }
        }
        (counts, edges)
    }
}

/// Single-owner builder for an append-only tape.
pub struct CircuitBuilder {
    field: Arc<FieldCtx>,
    kinds: Vec<GateKind>,
    ops: Vec<[u32; 2]>,
    consts: Vec<Elem>,
    const_ids: HashMap<Elem, u32>,
    const_gate: HashMap<u32, GateRef>,
    inputs: Vec<(Label, GateRef)>,
    input_ids: HashMap<Label, GateRef>,
    outputs: Vec<(Label, GateRef)>,
}

impl CircuitBuilder {
    pub fn new(field: Arc<FieldCtx>) -> CircuitBuilder {
        CircuitBuilder {
            field,
            kinds: Vec::new(),
            ops: Vec::new(),
            consts: Vec::new(),
            const_ids: HashMap::new(),
            const_gate: HashMap::new(),
            inputs: Vec::new(),
            input_ids: HashMap::new(),
            outputs: Vec::new(),
        }
    }

    pub fn field(&self) -> &Arc<FieldCtx> {
        &self.field
    }

    pub fn gate_count(&self) -> usize {
        self.kinds.len()
    }

    fn push(&mut self, kind: GateKind, ops: [u32; 2]) -> GateRef {
        let r = GateRef(self.kinds.len() as u32);
        self.kinds.push(kind);
        self.ops.push(ops);
        r
    }

    /// Declares (or retrieves) an input gate for `label`.
    pub fn input(&mut self, label: Label) -> GateRef {
        if let Some(&r) = self.input_ids.get(&label) {
            return r;
        }
        let r = self.push(GateKind::Input, [0, 0]);
        self.input_ids.insert(label, r);
        self.inputs.push((label, r));
        r
    }

    /// A constant gate; equal values share one gate.
    pub fn constant(&mut self, value: Elem) -> GateRef {
        debug_assert_eq!(value.len(), self.field.degree());
        let id = match self.const_ids.get(&value) {
            Some(&id) => id,
            None => {
                let id = self.consts.len() as u32;
                self.consts.push(value.clone());
                self.const_ids.insert(value, id);
                id
            }
        };
        if let Some(&r) = self.const_gate.get(&id) {
            return r;
        }
        let r = self.push(GateKind::Const, [id, 0]);
        self.const_gate.insert(id, r);
        r
    }

    pub fn zero(&mut self) -> GateRef {
        let z = self.field.zero();
        self.constant(z)
    }

    pub fn one(&mut self) -> GateRef {
        let o = self.field.one();
        self.constant(o)
    }

    fn const_value(&self, r: GateRef) -> Option<&Elem> {
        if self.kinds[r.0 as usize] == GateKind::Const {
            Some(&self.consts[self.ops[r.0 as usize][0] as usize])
        } else {
            None
        }
    }

    fn is_zero_ref(&self, r: GateRef) -> bool {
        self.const_value(r).map(|v| self.field.is_zero(v)).unwrap_or(false)
    }

    fn is_one_ref(&self, r: GateRef) -> bool {
        self.const_value(r).map(|v| self.field.is_one(v)).unwrap_or(false)
    }

    pub fn add(&mut self, a: GateRef, b: GateRef) -> GateRef {
        if self.is_zero_ref(a) {
            return b;
        }
        if self.is_zero_ref(b) {
            return a;
        }
        if let (Some(x), Some(y)) = (self.const_value(a), self.const_value(b)) {
            let v = self.field.add(x, y);
            return self.constant(v);
        }
        self.push(GateKind::Add, [a.0, b.0])
    }

    pub fn sub(&mut self, a: GateRef, b: GateRef) -> GateRef {
        if self.is_zero_ref(b) {
            return a;
        }
        if let (Some(x), Some(y)) = (self.const_value(a), self.const_value(b)) {
            let v = self.field.sub(x, y);
            return self.constant(v);
        }
        self.push(GateKind::Sub, [a.0, b.0])
    }

    pub fn mul(&mut self, a: GateRef, b: GateRef) -> GateRef {
        if self.is_zero_ref(a) || self.is_zero_ref(b) {
            return self.zero();
        }
        if self.is_one_ref(a) {
            return b;
        }
        if self.is_one_ref(b) {
            return a;
        }
        if let (Some(x), Some(y)) = (self.const_value(a), self.const_value(b)) {
            let v = self.field.mul(x, y);
            return self.constant(v);
        }
        self.push(GateKind::Mul, [a.0, b.0])
    }

    pub fn div(&mut self, a: GateRef, b: GateRef) -> GateRef {
        if self.is_one_ref(b) {
            return a;
        }
        if let (Some(x), Some(y)) = (self.const_value(a), self.const_value(b)) {
            let v = self
                .field
                .div(x, y)
                .expect("constant division by zero in circuit construction");
            return self.constant(v);
        }
        self.push(GateKind::Div, [a.0, b.0])
    }

    /// Helper: multiply a gate by a constant value.
    pub fn mul_const(&mut self, value: Elem, a: GateRef) -> GateRef {
        let c = self.constant(value);
        self.mul(c, a)
    }

    /// Registers `r` as output `label`.
    pub fn mark_output(&mut self, label: Label, r: GateRef) {
        debug_assert!(
            !self.outputs.iter().any(|(l, _)| *l == label),
            "duplicate output label {label:?}"
        );
        self.outputs.push((label, r));
    }

    /// Splice another circuit into this tape, binding its inputs to existing
    /// gates. Arithmetic gates are re-appended through the folding
    /// constructors, so subtrees fed only by constants collapse.
    /// Returns the spliced circuit's outputs as gates of this builder.
    pub fn append_circuit(
        &mut self,
        c: &Circuit,
        bindings: &BTreeMap<Label, GateRef>,
    ) -> Result<Vec<(Label, GateRef)>> {
        let mut map: Vec<GateRef> = Vec::with_capacity(c.kinds.len());
        let mut input_lookup: HashMap<u32, Label> = HashMap::new();
        for &(l, r) in &c.inputs {
            input_lookup.insert(r.0, l);
        }
        for i in 0..c.kinds.len() {
            let r = match c.kinds[i] {
                GateKind::Input => {
                    let label = input_lookup[&(i as u32)];
                    *bindings.get(&label).ok_or(Error::MissingInput(label))?
                }
                GateKind::Const => self.constant(c.consts[c.ops[i][0] as usize].clone()),
                GateKind::Add => self.add(map[c.ops[i][0] as usize], map[c.ops[i][1] as usize]),
                GateKind::Sub => self.sub(map[c.ops[i][0] as usize], map[c.ops[i][1] as usize]),
                GateKind::Mul => self.mul(map[c.ops[i][0] as usize], map[c.ops[i][1] as usize]),
                GateKind::Div => self.div(map[c.ops[i][0] as usize], map[c.ops[i][1] as usize]),
            };
            map.push(r);
        }
        Ok(c.outputs.iter().map(|&(l, r)| (l, map[r.0 as usize])).collect())
    }

    pub fn finish(mut self) -> Circuit {
        self.inputs.sort_by_key(|&(l, _)| l);
        let n = self.kinds.len();
        let mut last_use = vec![0u32; n];
        for i in 0..n {
            match self.kinds[i] {
                GateKind::Input | GateKind::Const => {}
                _ => {
                    last_use[self.ops[i][0] as usize] = i as u32;
                    last_use[self.ops[i][1] as usize] = i as u32;
                }
            }
        }
        for &(_, r) in &self.outputs {
            last_use[r.0 as usize] = u32::MAX;
        }
        Circuit {
            field: self.field,
            kinds: self.kinds,
            ops: self.ops,
            consts: self.consts,
            inputs: self.inputs,
            outputs: self.outputs,
            last_use,
        }
    }
}

// ---------------------------------------------------------------------------
// Reverse-mode derivative transform
// ---------------------------------------------------------------------------

/// Extend `c` with gates computing the partial derivative of output `w`
/// with respect to every input, by reverse accumulation over the tape.
///
/// The result keeps the original inputs and the output `w` (other outputs
/// are dropped), and adds one output `label.deriv()` per input label.
/// Adjoint contributions of a gate's consumers are folded left-to-right in
/// tape order. The gate count grows by a factor of at most five; this is
/// asserted on every construction.
pub fn baur_strassen(c: &Circuit, w: Label) -> Result<Circuit> {
    let &(_, w_gate) = c
        .outputs
        .iter()
        .find(|(l, _)| *l == w)
        .ok_or(Error::UnknownLabel(w))?;

    let n = c.kinds.len();
    let mut b = CircuitBuilder::new(c.field.clone());
    // Copy the forward tape verbatim (indices preserved). Constants are
    // re-registered to keep the builder's dedup maps coherent.
    for i in 0..n {
        match c.kinds[i] {
            GateKind::Const => {
                let id = match b.const_ids.get(&c.consts[c.ops[i][0] as usize]) {
                    Some(&id) => id,
                    None => {
                        let id = b.consts.len() as u32;
                        b.consts.push(c.consts[c.ops[i][0] as usize].clone());
                        b.const_ids.insert(c.consts[c.ops[i][0] as usize].clone(), id);
                        id
                    }
                };
                let r = b.push(GateKind::Const, [id, 0]);
                b.const_gate.entry(id).or_insert(r);
            }
            kind => {
                b.push(kind, c.ops[i]);
            }
        }
    }
    for &(l, r) in &c.inputs {
        b.input_ids.insert(l, r);
        b.inputs.push((l, r));
    }

    let (offsets, consumers) = c.consumer_csr();
    let one = b.one();
    let mut adj: Vec<Option<GateRef>> = vec![None; n];

    // Contribution of consumer `e` to the operand in `slot` (0 or 1).
    fn contribution(
        b: &mut CircuitBuilder,
        c: &Circuit,
        e: usize,
        slot: usize,
        adj_e: GateRef,
    ) -> GateRef {
        let [u, v] = c.ops[e];
        match c.kinds[e] {
            GateKind::Add => adj_e,
            GateKind::Sub => {
                if slot == 0 {
                    adj_e
                } else {
                    let zero = b.zero();
                    b.sub(zero, adj_e)
                }
            }
            GateKind::Mul => {
                let other = if slot == 0 { v } else { u };
                b.mul(adj_e, GateRef(other))
            }
            GateKind::Div => {
                if slot == 0 {
                    b.div(adj_e, GateRef(v))
                } else {
                    // d(u/v)/dv = -(u/v)/v
                    let q_over_v = b.div(GateRef(e as u32), GateRef(v));
                    let m = b.mul(adj_e, q_over_v);
                    let zero = b.zero();
                    b.sub(zero, m)
                }
            }
            _ => unreachable!("inputs and constants have no operands"),
        }
    }

    for g in (0..n).rev() {
        if matches!(c.kinds[g], GateKind::Const) {
            continue;
        }
        let mut acc = if GateRef(g as u32) == w_gate { Some(one) } else { None };
        let lo = offsets[g] as usize;
        let hi = offsets[g + 1] as usize;
        for idx in lo..hi {
            let e = consumers[idx] as usize;
            let adj_e = match adj[e] {
                Some(a) => a,
                None => continue, // consumer does not influence w
            };
            // consumers lists g once per operand slot; entries of a
            // double-edge gate (e.g. g*g) are adjacent, second = slot 1.
            let [u, v] = c.ops[e];
            let slot = if u == v {
                usize::from(idx > lo && consumers[idx - 1] == e as u32)
            } else {
                usize::from(v == g as u32)
            };
            let contrib = contribution(&mut b, c, e, slot, adj_e);
            acc = Some(match acc {
                None => contrib,
                Some(prev) => b.add(prev, contrib),
            });
        }
        adj[g] = acc;
    }

    b.outputs.clear();
    b.mark_output(w, w_gate);
    let zero = b.zero();
    let input_list = c.inputs.clone();
    for (label, gate) in input_list {
        let d = adj[gate.0 as usize].unwrap_or(zero);
        b.mark_output(label.deriv(), d);
    }

    let out = b.finish();
    assert!(
        out.gate_count() <= 5 * c.gate_count(),
        "derivative transform exceeded the 5x gate budget: {} > 5 * {}",
        out.gate_count(),
        c.gate_count()
    );
    Ok(out)
}

// ---------------------------------------------------------------------------
// Transposition of linear circuits
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, PartialEq, Eq)]
enum LinClass {
    Const,
    Lin,
}

/// Transpose a circuit computing a linear map `M x`, producing a circuit
/// computing `M^T y` with the input/output labels exchanged.
///
/// Linearity is validated structurally: multiplication gates must have at
/// least one constant-derived operand, division gates a constant-derived
/// divisor, and addition of a constant-derived value to an input-dependent
/// one (an affine offset) is rejected.
pub fn transpose_linear(c: &Circuit) -> Result<Circuit> {
    let n = c.kinds.len();
    let mut class = vec![LinClass::Const; n];
    let mut const_val: Vec<Option<Elem>> = vec![None; n];
    for i in 0..n {
        match c.kinds[i] {
            GateKind::Input => class[i] = LinClass::Lin,
            GateKind::Const => {
                const_val[i] = Some(c.consts[c.ops[i][0] as usize].clone());
            }
            kind => {
                let [u, v] = c.ops[i];
                let (cu, cv) = (class[u as usize], class[v as usize]);
                let const_side_is_zero = |side: u32| {
                    const_val[side as usize]
                        .as_ref()
                        .map(|e| c.field.is_zero(e))
                        .unwrap_or(false)
                };
                class[i] = match (kind, cu, cv) {
                    (GateKind::Add | GateKind::Sub, LinClass::Lin, LinClass::Lin) => LinClass::Lin,
                    (GateKind::Add | GateKind::Sub, LinClass::Const, LinClass::Const) => {
                        LinClass::Const
                    }
                    // adding or subtracting a zero constant keeps linearity
                    // (covers negation written as 0 - x)
                    (GateKind::Add | GateKind::Sub, LinClass::Const, LinClass::Lin)
                        if const_side_is_zero(u) =>
                    {
                        LinClass::Lin
                    }
                    (GateKind::Add | GateKind::Sub, LinClass::Lin, LinClass::Const)
                        if const_side_is_zero(v) =>
                    {
                        LinClass::Lin
                    }
                    (GateKind::Add | GateKind::Sub, _, _) => {
                        return Err(Error::NotLinear {
                            gate: i,
                            reason: "affine offset: sum of constant and input-dependent values"
                                .into(),
                        })
                    }
                    (GateKind::Mul, LinClass::Const, LinClass::Const) => LinClass::Const,
                    (GateKind::Mul, LinClass::Const, LinClass::Lin)
                    | (GateKind::Mul, LinClass::Lin, LinClass::Const) => LinClass::Lin,
                    (GateKind::Mul, LinClass::Lin, LinClass::Lin) => {
                        return Err(Error::NotLinear {
                            gate: i,
                            reason: "product of two input-dependent values".into(),
                        })
                    }
                    (GateKind::Div, _, LinClass::Lin) => {
                        return Err(Error::NotLinear {
                            gate: i,
                            reason: "division by an input-dependent value".into(),
                        })
                    }
                    (GateKind::Div, cu, LinClass::Const) => cu,
                    _ => unreachable!(),
                };
                if class[i] == LinClass::Const {
                    let f = &c.field;
                    let a = const_val[u as usize].as_ref().expect("const operand");
                    let bb = const_val[v as usize].as_ref().expect("const operand");
                    const_val[i] = Some(match kind {
                        GateKind::Add => f.add(a, bb),
                        GateKind::Sub => f.sub(a, bb),
                        GateKind::Mul => f.mul(a, bb),
                        GateKind::Div => f.div(a, bb).map_err(|_| Error::NotLinear {
                            gate: i,
                            reason: "division by constant zero".into(),
                        })?,
                        _ => unreachable!(),
                    });
                }
            }
        }
    }

    // Constant-valued outputs must be identically zero; a nonzero constant
    // output is an affine offset.
    for &(_, r) in &c.outputs {
        if class[r.0 as usize] == LinClass::Const {
            let v = const_val[r.0 as usize].as_ref().expect("const value");
            if !c.field.is_zero(v) {
                return Err(Error::NotLinear {
                    gate: r.0 as usize,
                    reason: "output is a nonzero constant".into(),
                });
            }
        }
    }

    let mut b = CircuitBuilder::new(c.field.clone());
    let (offsets, consumers) = c.consumer_csr();
    let mut adj: Vec<Option<GateRef>> = vec![None; n];

    // Seed adjoints with fresh inputs named after the original outputs.
    let mut seed_map: HashMap<u32, Vec<GateRef>> = HashMap::new();
    for &(label, r) in &c.outputs {
        let inp = b.input(label);
        seed_map.entry(r.0).or_default().push(inp);
    }

    for g in (0..n).rev() {
        if class[g] == LinClass::Const {
            continue;
        }
        let mut acc: Option<GateRef> = None;
        if let Some(seeds) = seed_map.get(&(g as u32)) {
            for &s in seeds.clone().iter() {
                acc = Some(match acc {
                    None => s,
                    Some(prev) => b.add(prev, s),
                });
            }
        }
        let lo = offsets[g] as usize;
        let hi = offsets[g + 1] as usize;
        for idx in lo..hi {
            let e = consumers[idx] as usize;
            if class[e] == LinClass::Const {
                continue;
            }
            let adj_e = match adj[e] {
                Some(a) => a,
                None => continue,
            };
            let [u, v] = c.ops[e];
            let slot = if u == v {
                usize::from(idx > lo && consumers[idx - 1] == e as u32)
            } else {
                usize::from(v == g as u32)
            };
            let contrib = match c.kinds[e] {
                GateKind::Add => adj_e,
                GateKind::Sub => {
                    if slot == 0 {
                        adj_e
                    } else {
                        let zero = b.zero();
                        b.sub(zero, adj_e)
                    }
                }
                GateKind::Mul => {
                    let other = if slot == 0 { v } else { u };
                    let cv = const_val[other as usize].clone().expect("const side");
                    b.mul_const(cv, adj_e)
                }
                GateKind::Div => {
                    let cv = const_val[v as usize].clone().expect("const divisor");
                    let cref = b.constant(cv);
                    b.div(adj_e, cref)
                }
                _ => unreachable!(),
            };
            acc = Some(match acc {
                None => contrib,
                Some(prev) => b.add(prev, contrib),
            });
        }
        adj[g] = acc;
    }

    let zero = b.zero();
    for &(label, gate) in &c.inputs {
        let d = adj[gate.0 as usize].unwrap_or(zero);
        b.mark_output(label, d);
    }
    Ok(b.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{FieldCtx, Prime};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn f7() -> Arc<FieldCtx> {
        Arc::new(FieldCtx::prime_field(Prime::new(7).unwrap()))
    }

    fn f7_ext() -> Arc<FieldCtx> {
        let mut f = vec![0u64; 7];
        f[0] = 7 - crate::field::least_primitive_root(7);
        f[6] = 1;
        Arc::new(FieldCtx::extension(Prime::new(7).unwrap(), f).unwrap())
    }

    #[test]
    fn eval_simple_sum() {
        let f = f7();
        let mut b = CircuitBuilder::new(f.clone());
        let x1 = b.input(Label::x(1));
        let x2 = b.input(Label::x(2));
        let s = b.add(x1, x2);
        b.mark_output(Label::w(0), s);
        let c = b.finish();
        assert!(c.validate());
        let mut a = Assignment::new();
        a.set(Label::x(1), f.from_residue(2));
        a.set(Label::x(2), f.from_residue(3));
        let out = c.eval(&a).unwrap();
        assert_eq!(out[&Label::w(0)], f.from_residue(5));
    }

    #[test]
    fn eval_square_over_extension() {
        let f = f7_ext();
        let cert = crate::field::find_large_order(Prime::new(7).unwrap(), 100).unwrap();
        let mut b = CircuitBuilder::new(f.clone());
        let x = b.input(Label::x(0));
        let sq = b.mul(x, x);
        b.mark_output(Label::w(0), sq);
        let c = b.finish();
        let mut a = Assignment::new();
        a.set(Label::x(0), cert.omega.clone());
        let out = c.eval(&a).unwrap();
        assert_eq!(out[&Label::w(0)], f.pow(&cert.omega, 2));
    }

    #[test]
    fn empty_circuit_validates() {
        let c = CircuitBuilder::new(f7()).finish();
        assert!(c.validate());
    }

    #[test]
    fn forward_reference_fails_validation() {
        let f = f7();
        let mut b = CircuitBuilder::new(f);
        let x = b.input(Label::x(0));
        let y = b.input(Label::x(1));
        let g = b.add(x, y);
        b.mark_output(Label::w(0), g);
        let mut c = b.finish();
        // corrupt: make the add reference a later index
        c.ops[g.0 as usize] = [g.0 + 5, x.0];
        assert!(!c.validate());
    }

    /// Independent oracle: recursive tree-walk interpretation of the DAG.
    fn tree_walk(c: &Circuit, values: &BTreeMap<Label, Elem>, r: GateRef) -> Elem {
        let f = c.field();
        match c.kind(r) {
            GateKind::Input => {
                let (label, _) = c.inputs().iter().find(|(_, g)| *g == r).unwrap();
                values[label].clone()
            }
            GateKind::Const => c.consts[c.operands(r)[0] as usize].clone(),
            kind => {
                let [u, v] = c.operands(r);
                let a = tree_walk(c, values, GateRef(u));
                let b = tree_walk(c, values, GateRef(v));
                match kind {
                    GateKind::Add => f.add(&a, &b),
                    GateKind::Sub => f.sub(&a, &b),
                    GateKind::Mul => f.mul(&a, &b),
                    GateKind::Div => f.div(&a, &b).unwrap(),
                    _ => unreachable!(),
                }
            }
        }
    }

    /// Deterministic random division-free circuit with bounded degree.
    fn random_circuit(
        field: &Arc<FieldCtx>,
        gates: usize,
        inputs: usize,
        rng: &mut ChaCha8Rng,
    ) -> Circuit {
        let mut b = CircuitBuilder::new(field.clone());
        let mut pool: Vec<GateRef> = (0..inputs).map(|i| b.input(Label::x(i as i64))).collect();
        let mut degree: HashMap<u32, u32> =
            pool.iter().map(|r| (r.0, 1)).collect();
        while b.gate_count() < gates {
            let i = rng.gen_range(0..pool.len());
            let j = rng.gen_range(0..pool.len());
            let (a, bb) = (pool[i], pool[j]);
            let (da, db) = (degree[&a.0], degree[&bb.0]);
            let r = match rng.gen_range(0..4) {
                0 => b.add(a, bb),
                1 => b.sub(a, bb),
                2 if da + db <= 8 => b.mul(a, bb),
                _ => {
                    let v = field.rand_elem(rng);
                    let cr = b.constant(v);
                    b.add(a, cr)
                }
            };
            degree.insert(r.0, (da + db).min(16));
            pool.push(r);
        }
        let last = *pool.last().unwrap();
        b.mark_output(Label::w(0), last);
        b.finish()
    }

    #[test]
    fn eval_matches_tree_walk_oracle() {
        let field = f7();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let c = random_circuit(&field, 30, 3, &mut rng);
            assert!(c.validate());
            let mut a = Assignment::new();
            let mut vals = BTreeMap::new();
            for (l, _) in c.inputs() {
                let v = field.rand_elem(&mut rng);
                a.set(*l, v.clone());
                vals.insert(*l, v);
            }
            let got = c.eval(&a).unwrap();
            let (wl, wr) = (c.outputs()[0].0, c.outputs()[0].1);
            assert_eq!(got[&wl], tree_walk(&c, &vals, wr));
        }
    }

    #[test]
    fn division_by_zero_identifies_gate() {
        let f = f7();
        let mut b = CircuitBuilder::new(f.clone());
        let x = b.input(Label::x(0));
        let y = b.input(Label::x(1));
        let q = b.div(x, y);
        b.mark_output(Label::w(0), q);
        let c = b.finish();
        let mut a = Assignment::new();
        a.set(Label::x(0), f.from_residue(3));
        a.set(Label::x(1), f.zero());
        match c.eval(&a) {
            Err(Error::EvalDivByZero { gate }) => assert_eq!(gate, q.0 as usize),
            other => panic!("expected division error, got {other:?}"),
        }
    }

    #[test]
    fn derivative_product_rule() {
        let f = f7();
        let mut b = CircuitBuilder::new(f.clone());
        let x1 = b.input(Label::x(1));
        let x2 = b.input(Label::x(2));
        let w = b.mul(x1, x2);
        b.mark_output(Label::w(0), w);
        let c = b.finish();
        let dc = baur_strassen(&c, Label::w(0)).unwrap();
        assert!(dc.validate());
        let mut a = Assignment::new();
        a.set(Label::x(1), f.from_residue(4));
        a.set(Label::x(2), f.from_residue(6));
        let out = dc.eval(&a).unwrap();
        assert_eq!(out[&Label::w(0)], f.from_residue(24 % 7));
        assert_eq!(out[&Label::x(1).deriv()], f.from_residue(6));
        assert_eq!(out[&Label::x(2).deriv()], f.from_residue(4));
    }

    #[test]
    fn derivative_of_square_is_2x() {
        let f = f7();
        let mut b = CircuitBuilder::new(f.clone());
        let x = b.input(Label::x(0));
        let w = b.mul(x, x);
        b.mark_output(Label::w(0), w);
        let c = b.finish();
        let dc = baur_strassen(&c, Label::w(0)).unwrap();
        let mut a = Assignment::new();
        a.set(Label::x(0), f.from_residue(5));
        let out = dc.eval(&a).unwrap();
        assert_eq!(out[&Label::x(0).deriv()], f.from_residue(10 % 7));
    }

    #[test]
    fn derivative_quotient_rule() {
        let f = f7();
        let mut b = CircuitBuilder::new(f.clone());
        let x = b.input(Label::x(0));
        let y = b.input(Label::x(1));
        let w = b.div(x, y);
        b.mark_output(Label::w(0), w);
        let c = b.finish();
        let dc = baur_strassen(&c, Label::w(0)).unwrap();
        let mut a = Assignment::new();
        a.set(Label::x(0), f.from_residue(3));
        a.set(Label::x(1), f.from_residue(2));
        let out = dc.eval(&a).unwrap();
        // d(x/y)/dx = 1/y = 4 (2*4=8=1 mod 7); d(x/y)/dy = -x/y^2 = -3*2 = -6 = 1
        assert_eq!(out[&Label::x(0).deriv()], f.from_residue(4));
        let y2inv = f.inv(&f.from_residue(4)).unwrap();
        let expect = f.neg(&f.mul(&f.from_residue(3), &y2inv));
        assert_eq!(out[&Label::x(1).deriv()], expect);
    }

    #[test]
    fn baur_strassen_reproduces_w_and_respects_size_bound() {
        let field = f7();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..40 {
            let c = random_circuit(&field, 40, 4, &mut rng);
            let dc = baur_strassen(&c, Label::w(0)).unwrap();
            assert!(dc.gate_count() <= 5 * c.gate_count());
            let mut a = Assignment::new();
            for (l, _) in c.inputs() {
                a.set(*l, field.rand_elem(&mut rng));
            }
            let orig = c.eval(&a).unwrap();
            let with_derivs = dc.eval(&a).unwrap();
            assert_eq!(orig[&Label::w(0)], with_derivs[&Label::w(0)]);
        }
    }

    #[test]
    fn transpose_scalar_is_itself() {
        let f = f7();
        let mut b = CircuitBuilder::new(f.clone());
        let x = b.input(Label::x(0));
        let w = b.mul_const(f.from_residue(3), x);
        b.mark_output(Label::w(0), w);
        let c = b.finish();
        let t = transpose_linear(&c).unwrap();
        let mut a = Assignment::new();
        a.set(Label::w(0), f.from_residue(2));
        let out = t.eval(&a).unwrap();
        assert_eq!(out[&Label::x(0)], f.from_residue(6));
    }

    #[test]
    fn transpose_2x2_explicit() {
        // M = [[1,2],[0,1]]; transpose computes [[1,0],[2,1]] y
        let f = f7();
        let mut b = CircuitBuilder::new(f.clone());
        let x0 = b.input(Label::x(0));
        let x1 = b.input(Label::x(1));
        let two_x1 = b.mul_const(f.from_residue(2), x1);
        let o0 = b.add(x0, two_x1);
        b.mark_output(Label::w(0), o0);
        b.mark_output(Label::w(1), x1);
        let c = b.finish();
        let t = transpose_linear(&c).unwrap();
        let mut a = Assignment::new();
        a.set(Label::w(0), f.from_residue(1));
        a.set(Label::w(1), f.from_residue(1));
        let out = t.eval(&a).unwrap();
        // M^T [1,1] = [1, 3]
        assert_eq!(out[&Label::x(0)], f.from_residue(1));
        assert_eq!(out[&Label::x(1)], f.from_residue(3));
    }

    /// Extract the dense matrix of a linear circuit by unit-vector probing.
    fn probe_matrix(c: &Circuit) -> Vec<Vec<Elem>> {
        let f = c.field().clone();
        let ins: Vec<Label> = c.inputs().iter().map(|(l, _)| *l).collect();
        let mut cols = Vec::new();
        for j in 0..ins.len() {
            let mut a = Assignment::new();
            for (k, l) in ins.iter().enumerate() {
                a.set(*l, if k == j { f.one() } else { f.zero() });
            }
            let out = c.eval(&a).unwrap();
            cols.push(c.outputs().iter().map(|(l, _)| out[l].clone()).collect::<Vec<_>>());
        }
        cols
    }

    #[test]
    fn transpose_is_involution_extensionally() {
        let f = f7();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            // random linear circuit: adds, subs, const-muls
            let mut b = CircuitBuilder::new(f.clone());
            let mut pool: Vec<GateRef> =
                (0..3).map(|i| b.input(Label::x(i as i64))).collect();
            for _ in 0..15 {
                let i = rng.gen_range(0..pool.len());
                let j = rng.gen_range(0..pool.len());
                let r = match rng.gen_range(0..3) {
                    0 => b.add(pool[i], pool[j]),
                    1 => b.sub(pool[i], pool[j]),
                    _ => {
                        let v = f.rand_elem(&mut rng);
                        b.mul_const(v, pool[i])
                    }
                };
                pool.push(r);
            }
            for (k, r) in pool.iter().rev().take(2).enumerate() {
                b.mark_output(Label::w(k as i64), *r);
            }
            let c = b.finish();
            let t = transpose_linear(&c).unwrap();
            let tt = transpose_linear(&t).unwrap();
            let m1 = probe_matrix(&c);
            let m2 = probe_matrix(&tt);
            assert_eq!(m1, m2);
        }
    }

    #[test]
    fn nonlinear_circuit_rejected() {
        let f = f7();
        let mut b = CircuitBuilder::new(f.clone());
        let x = b.input(Label::x(0));
        let y = b.input(Label::x(1));
        let m = b.mul(x, y);
        b.mark_output(Label::w(0), m);
        let c = b.finish();
        match transpose_linear(&c) {
            Err(Error::NotLinear { gate, .. }) => assert_eq!(gate, m.0 as usize),
            other => panic!("expected NotLinear, got {other:?}"),
        }
    }

    #[test]
    fn derivative_of_linear_circuit_is_input_independent() {
        let f = f7();
        let mut b = CircuitBuilder::new(f.clone());
        let x0 = b.input(Label::x(0));
        let x1 = b.input(Label::x(1));
        let t0 = b.mul_const(f.from_residue(3), x0);
        let t1 = b.mul_const(f.from_residue(5), x1);
        let w = b.add(t0, t1);
        b.mark_output(Label::w(0), w);
        let c = b.finish();
        let dc = baur_strassen(&c, Label::w(0)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut grads = Vec::new();
        for _ in 0..2 {
            let mut a = Assignment::new();
            a.set(Label::x(0), f.rand_elem(&mut rng));
            a.set(Label::x(1), f.rand_elem(&mut rng));
            let out = dc.eval(&a).unwrap();
            grads.push((out[&Label::x(0).deriv()].clone(), out[&Label::x(1).deriv()].clone()));
        }
        assert_eq!(grads[0], grads[1]);
    }

    #[test]
    fn acir_dump_golden() {
        let f = f7();
        let mut b = CircuitBuilder::new(f.clone());
        let x = b.input(Label::x(0));
        let c3 = b.constant(f.from_residue(3));
        let m = b.mul(x, c3);
        b.mark_output(Label::w(0), m);
        let c = b.finish();
        let bytes = c.dump_acir();
        let mut expect = Vec::new();
        expect.extend_from_slice(b"ACIR1");
        expect.extend_from_slice(&3u64.to_le_bytes());
        expect.push(GateKind::Input as u8);
        expect.push(Ns::X as u8);
        expect.extend_from_slice(&0i64.to_le_bytes());
        expect.push(GateKind::Const as u8);
        expect.extend_from_slice(&1u64.to_le_bytes());
        expect.extend_from_slice(&3u64.to_le_bytes());
        expect.push(GateKind::Mul as u8);
        expect.extend_from_slice(&0u64.to_le_bytes());
        expect.extend_from_slice(&1u64.to_le_bytes());
        assert_eq!(bytes, expect);
    }
}
