//! Simplified symbolic execution of a selected CFG path.
//!
//! The machine tracks the stack, the eight GP registers and a key-value
//! memory. Only the small data/ALU mnemonic set has semantics; everything
//! else is skipped. The point is not soundness but recovering what sits on
//! the stack at each API call site.

use std::collections::HashMap;
use std::fmt;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::cfg::Cfg;
use crate::error::{Error, Result};
use crate::listing::{ApiSignatureDb, FunctionListing, ImportTable};
use crate::x86::{Instruction, MemRef, OpClass, Operand, Register, ALL_REGISTERS};

/// Maximum expression-tree depth before a value collapses to a fresh memory
/// cell.
pub const MAX_EXPR_DEPTH: usize = 16;
/// How many stack values are captured at a call site.
pub const STACK_CAPTURE: usize = 12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ExprOp {
    Add,
    Sub,
    Xor,
}

impl fmt::Display for ExprOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExprOp::Add => "+",
            ExprOp::Sub => "-",
            ExprOp::Xor => "^",
        })
    }
}

/// The executor's value universe.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum SymValue {
    Concrete(u32),
    /// The unknown initial content of a register.
    Reg(Register),
    /// The function argument at `[ebp+offset]`, named `arg_<offset>h`.
    Arg(u32),
    /// The local variable at `[ebp-offset]`, named `var_<offset>h`.
    Var(u32),
    /// The i-th unknown emitted for an arbitrary memory address.
    MemCell(u32),
    /// Whatever the last call returned.
    Ret,
    /// Dummy value for reads past the known stack.
    Star,
    Expr(ExprOp, Box<SymValue>, Box<SymValue>),
}

impl SymValue {
    pub fn depth(&self) -> usize {
        match self {
            SymValue::Expr(_, l, r) => 1 + l.depth().max(r.depth()),
            _ => 1,
        }
    }

    pub fn as_concrete(&self) -> Option<u32> {
        match self {
            SymValue::Concrete(c) => Some(*c),
            _ => None,
        }
    }
}

impl fmt::Display for SymValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SymValue::Concrete(c) => write!(f, "0x{c:X}"),
            SymValue::Reg(r) => f.write_str(r.name()),
            SymValue::Arg(off) => write!(f, "arg_{off:X}h"),
            SymValue::Var(off) => write!(f, "var_{off:X}h"),
            SymValue::MemCell(i) => write!(f, "m_{i}"),
            SymValue::Ret => f.write_str("ret"),
            SymValue::Star => f.write_str("*"),
            SymValue::Expr(op, l, r) => write!(f, "({l} {op} {r})"),
        }
    }
}

/// Abstraction-ready collapse of a [`SymValue`], as stored in record files.
/// Only concrete integers keep their payload.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "t", rename_all = "lowercase")]
pub enum RawArg {
    Int { v: u32 },
    Reg,
    Arg,
    Var,
    Mem,
    Ret,
    Star,
    Expr,
}

impl From<&SymValue> for RawArg {
    fn from(v: &SymValue) -> RawArg {
        match v {
            SymValue::Concrete(c) => RawArg::Int { v: *c },
            SymValue::Reg(_) => RawArg::Reg,
            SymValue::Arg(_) => RawArg::Arg,
            SymValue::Var(_) => RawArg::Var,
            SymValue::MemCell(_) => RawArg::Mem,
            SymValue::Ret => RawArg::Ret,
            SymValue::Star => RawArg::Star,
            SymValue::Expr(..) => RawArg::Expr,
        }
    }
}

/// One observed API call site.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiCallRecord {
    pub binary_id: String,
    pub call_addr: u32,
    /// Label; absent on inputs assembled for pure prediction.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api: Option<String>,
    pub n_args: u8,
    /// Exactly [`STACK_CAPTURE`] values read top-down, star-padded.
    pub raw_args: Vec<RawArg>,
    /// Module VA interval, used for pointer classification downstream.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_range: Option<(u32, u32)>,
}

impl ApiCallRecord {
    pub fn api_name(&self) -> &str {
        self.api.as_deref().unwrap_or("")
    }

    /// Stack depth estimate: captured values minus trailing star padding.
    pub fn available_depth(&self) -> usize {
        let trailing = self
            .raw_args
            .iter()
            .rev()
            .take_while(|a| matches!(a, RawArg::Star))
            .count();
        self.raw_args.len() - trailing
    }
}

/// Parse a records JSONL stream.
pub fn parse_records(text: &str) -> Result<Vec<ApiCallRecord>> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        let rec: ApiCallRecord =
            serde_json::from_str(raw).map_err(|e| Error::parse(idx + 1, e.to_string()))?;
        if rec.raw_args.len() != STACK_CAPTURE {
            return Err(Error::parse(
                idx + 1,
                format!("expected {STACK_CAPTURE} raw_args, got {}", rec.raw_args.len()),
            ));
        }
        if !(3..=12).contains(&rec.n_args) {
            return Err(Error::parse(
                idx + 1,
                format!("n_args {} outside the supported 3..=12", rec.n_args),
            ));
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn serialize_records(records: &[ApiCallRecord]) -> String {
    let mut out = String::new();
    for r in records {
        let _ = writeln!(
            out,
            "{}",
            serde_json::to_string(r).expect("record serialization cannot fail")
        );
    }
    out
}

/// Registers, stack and simulated memory for one path execution.
#[derive(Clone, Debug)]
pub struct MachineState {
    regs: [SymValue; 8],
    /// Top of stack is the last element.
    stack: Vec<SymValue>,
    mem: HashMap<String, SymValue>,
    mem_counter: u32,
}

impl Default for MachineState {
    fn default() -> Self {
        Self::new()
    }
}

impl MachineState {
    /// Fresh state: every register holds its own symbolic atom, the stack and
    /// memory are empty.
    pub fn new() -> MachineState {
        MachineState {
            regs: ALL_REGISTERS.map(SymValue::Reg),
            stack: Vec::new(),
            mem: HashMap::new(),
            mem_counter: 0,
        }
    }

    pub fn stack_depth(&self) -> usize {
        self.stack.len()
    }

    pub fn register(&self, r: Register) -> &SymValue {
        &self.regs[r.index()]
    }

    pub fn set_register(&mut self, r: Register, v: SymValue) {
        self.regs[r.index()] = v;
    }

    pub fn push(&mut self, v: SymValue) {
        self.stack.push(v);
    }

    /// Pop never underflows: an empty stack yields [`SymValue::Star`].
    pub fn pop(&mut self) -> SymValue {
        self.stack.pop().unwrap_or(SymValue::Star)
    }

    /// Stack value `i` slots below the top, star-padded past the bottom.
    pub fn peek(&self, i: usize) -> SymValue {
        if i < self.stack.len() {
            self.stack[self.stack.len() - 1 - i].clone()
        } else {
            SymValue::Star
        }
    }

    pub fn mem_value(&self, key: &str) -> Option<&SymValue> {
        self.mem.get(key)
    }

    fn fresh_mem_cell(&mut self) -> SymValue {
        let v = SymValue::MemCell(self.mem_counter);
        self.mem_counter += 1;
        v
    }

    /// `[esp+k]` resolves to a live stack slot when aligned and in range.
    fn esp_slot(&self, m: &MemRef) -> Option<usize> {
        if m.base != Some(Register::Esp) || m.index.is_some() {
            return None;
        }
        if m.disp < 0 || m.disp % 4 != 0 {
            return None;
        }
        let slot = (m.disp / 4) as usize;
        (slot < self.stack.len()).then(|| self.stack.len() - 1 - slot)
    }

    /// Read a memory operand. Unknown `ebp`-relative addresses become
    /// argument/local atoms; any other unknown address emits a fresh memory
    /// cell. Emitted values are stored so a second read sees the same value.
    pub fn read_mem(&mut self, m: &MemRef) -> SymValue {
        if let Some(slot) = self.esp_slot(m) {
            return self.stack[slot].clone();
        }
        let key = m.key();
        if let Some(v) = self.mem.get(&key) {
            return v.clone();
        }
        let v = match (m.base, m.index) {
            (Some(Register::Ebp), None) if m.disp > 0 => SymValue::Arg(m.disp as u32),
            (Some(Register::Ebp), None) if m.disp < 0 => {
                SymValue::Var((m.disp as i64).unsigned_abs() as u32)
            }
            _ => self.fresh_mem_cell(),
        };
        self.mem.insert(key, v.clone());
        v
    }

    pub fn write_mem(&mut self, m: &MemRef, v: SymValue) {
        if let Some(slot) = self.esp_slot(m) {
            self.stack[slot] = v;
            return;
        }
        self.mem.insert(m.key(), v);
    }

    fn eval(&mut self, op: &Operand) -> SymValue {
        match op {
            Operand::Imm { val } => SymValue::Concrete(*val),
            Operand::Reg { reg, .. } => self.regs[reg.index()].clone(),
            Operand::Mem(m) => self.read_mem(m),
        }
    }

    /// Combine two values under an ALU op: concrete operands fold mod 2^32,
    /// anything else builds an expression, collapsing past the depth cap.
    fn combine(&mut self, op: ExprOp, l: SymValue, r: SymValue) -> SymValue {
        if let (Some(a), Some(b)) = (l.as_concrete(), r.as_concrete()) {
            let c = match op {
                ExprOp::Add => a.wrapping_add(b),
                ExprOp::Sub => a.wrapping_sub(b),
                ExprOp::Xor => a ^ b,
            };
            return SymValue::Concrete(c);
        }
        let depth = 1 + l.depth().max(r.depth());
        if depth > MAX_EXPR_DEPTH {
            return self.fresh_mem_cell();
        }
        SymValue::Expr(op, Box::new(l), Box::new(r))
    }

    /// The symbolic address denoted by a memory operand (`lea` semantics).
    fn address_of(&mut self, m: &MemRef) -> SymValue {
        match (m.base, m.index) {
            (None, None) => SymValue::Concrete(m.disp as u32),
            (Some(Register::Ebp), None) if m.disp > 0 => SymValue::Arg(m.disp as u32),
            (Some(Register::Ebp), None) if m.disp < 0 => {
                SymValue::Var((m.disp as i64).unsigned_abs() as u32)
            }
            _ => {
                let mut acc: Option<SymValue> = m.base.map(|r| self.regs[r.index()].clone());
                if let Some(idx) = m.index {
                    let iv = self.regs[idx.index()].clone();
                    let term = match iv.as_concrete() {
                        Some(c) => SymValue::Concrete(c.wrapping_mul(m.scale as u32)),
                        // No multiply in the expression language; an additive
                        // stand-in keeps the value in the expression class.
                        None if m.scale > 1 => self.combine(ExprOp::Add, iv.clone(), iv),
                        None => iv,
                    };
                    acc = Some(match acc {
                        Some(a) => self.combine(ExprOp::Add, a, term),
                        None => term,
                    });
                }
                let acc = acc.expect("base or index present in this arm");
                if m.disp == 0 {
                    acc
                } else if m.disp > 0 {
                    self.combine(ExprOp::Add, acc, SymValue::Concrete(m.disp as u32))
                } else {
                    self.combine(
                        ExprOp::Sub,
                        acc,
                        SymValue::Concrete((m.disp as i64).unsigned_abs() as u32),
                    )
                }
            }
        }
    }

    /// Write to a register or memory destination. Sub-register writes alias
    /// the whole register: concrete values are stored masked to the access
    /// width, anything else degrades to a fresh unknown.
    fn write_dest(&mut self, dst: &Operand, v: SymValue) {
        match dst {
            Operand::Reg { reg, size } => {
                let v = if *size == 4 {
                    v
                } else {
                    match v.as_concrete() {
                        Some(c) => {
                            let mask = if *size == 1 { 0xFF } else { 0xFFFF };
                            SymValue::Concrete(c & mask)
                        }
                        None => self.fresh_mem_cell(),
                    }
                };
                self.regs[reg.index()] = v;
            }
            Operand::Mem(m) => self.write_mem(m, v),
            Operand::Imm { .. } => {}
        }
    }

    /// `add esp, k` / `sub esp, k` with a concrete k move whole slots instead
    /// of going through the ALU, keeping the modeled stack consistent.
    fn adjust_stack(&mut self, mn: &str, k: u32) {
        let slots = (k / 4) as usize;
        if mn == "add" {
            for _ in 0..slots {
                self.pop();
            }
        } else {
            for _ in 0..slots {
                self.push(SymValue::Star);
            }
        }
    }
}

/// Execute one supported data/ALU instruction. Total: every instruction of
/// class [`OpClass::Data`] leaves a well-defined state.
pub fn step(state: &mut MachineState, ins: &Instruction) {
    debug_assert_eq!(ins.op_class, OpClass::Data);
    match ins.mnemonic.as_str() {
        "push" => {
            let v = state.eval(&ins.operands[0]);
            state.push(v);
        }
        "pop" => {
            let v = state.pop();
            state.write_dest(&ins.operands[0], v);
        }
        "mov" => {
            let v = state.eval(&ins.operands[1]);
            state.write_dest(&ins.operands[0], v);
        }
        "lea" => {
            let v = match &ins.operands[1] {
                Operand::Mem(m) => state.address_of(m),
                other => state.eval(other),
            };
            state.write_dest(&ins.operands[0], v);
        }
        "xor" => {
            if ins.operands[0] == ins.operands[1] {
                state.write_dest(&ins.operands[0], SymValue::Concrete(0));
            } else {
                alu(state, ExprOp::Xor, ins);
            }
        }
        "add" | "sub" => {
            if let (Operand::Reg { reg: Register::Esp, size: 4 }, Some(k)) =
                (&ins.operands[0], ins.operands[1].as_imm())
            {
                state.adjust_stack(&ins.mnemonic, k);
                return;
            }
            let op = if ins.mnemonic == "add" {
                ExprOp::Add
            } else {
                ExprOp::Sub
            };
            alu(state, op, ins);
        }
        "inc" | "dec" => {
            let op = if ins.mnemonic == "inc" {
                ExprOp::Add
            } else {
                ExprOp::Sub
            };
            let l = state.eval(&ins.operands[0]);
            let v = state.combine(op, l, SymValue::Concrete(1));
            state.write_dest(&ins.operands[0], v);
        }
        _ => unreachable!("step called on unsupported mnemonic"),
    }
}

fn alu(state: &mut MachineState, op: ExprOp, ins: &Instruction) {
    let l = state.eval(&ins.operands[0]);
    let r = state.eval(&ins.operands[1]);
    let v = state.combine(op, l, r);
    state.write_dest(&ins.operands[0], v);
}

/// Everything produced by executing one path.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ExecOutcome {
    pub records: Vec<ApiCallRecord>,
    /// Calls that resolved to an import with no signature entry.
    pub skipped_no_signature: usize,
}

/// Walk the selected path, stepping supported instructions and recording an
/// [`ApiCallRecord`] at every call that resolves to a known API.
///
/// At such a call the top [`STACK_CAPTURE`] stack values are captured
/// (star-padded), then exactly `n_args` slots are removed. After every call,
/// API or not, `eax` becomes [`SymValue::Ret`].
pub fn execute_path(
    f: &FunctionListing,
    cfg: &Cfg,
    path: &[usize],
    imports: &ImportTable,
    sigs: &ApiSignatureDb,
) -> ExecOutcome {
    let mut state = MachineState::new();
    let mut out = ExecOutcome::default();
    for &node in path {
        let (lo, hi) = cfg.blocks[node].range;
        for ins in &f.instructions[lo..hi] {
            match ins.op_class {
                OpClass::Data => step(&mut state, ins),
                OpClass::Call => {
                    handle_call(&mut state, ins, f, imports, sigs, &mut out);
                    state.set_register(Register::Eax, SymValue::Ret);
                }
                // Branches, returns and unsupported instructions have no
                // effect on the modeled state.
                OpClass::Branch | OpClass::Return | OpClass::Other => {}
            }
        }
    }
    out
}

fn handle_call(
    state: &mut MachineState,
    ins: &Instruction,
    f: &FunctionListing,
    imports: &ImportTable,
    sigs: &ApiSignatureDb,
    out: &mut ExecOutcome,
) {
    // Indirect calls cannot be resolved statically and count as non-API.
    let Some(target) = ins.operands.first().and_then(Operand::as_imm) else {
        return;
    };
    let Some(name) = imports.get(target) else {
        return;
    };
    let Some(n_args) = sigs.get(name) else {
        out.skipped_no_signature += 1;
        return;
    };
    let raw_args: Vec<RawArg> = (0..STACK_CAPTURE)
        .map(|i| RawArg::from(&state.peek(i)))
        .collect();
    out.records.push(ApiCallRecord {
        binary_id: f.binary_id.clone(),
        call_addr: ins.addr,
        api: Some(name.to_string()),
        n_args,
        raw_args,
        image_range: Some(f.image_range),
    });
    for _ in 0..n_args {
        state.pop();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cfg::build_cfg;
    use crate::listing::parse_listing;

    fn reg(name: &str) -> Operand {
        let (reg, size) = Register::parse_alias(name).unwrap();
        Operand::Reg { reg, size }
    }

    fn imm(val: u32) -> Operand {
        Operand::Imm { val }
    }

    fn mem(base: Option<Register>, disp: i32, size: u8) -> Operand {
        Operand::Mem(MemRef {
            base,
            index: None,
            scale: 1,
            disp,
            size,
        })
    }

    fn ins(mn: &str, ops: Vec<Operand>) -> Instruction {
        Instruction::new(0x1000, mn.to_string(), ops).unwrap()
    }

    #[test]
    fn memory_write_uses_the_documented_key() {
        let mut st = MachineState::new();
        step(
            &mut st,
            &ins("mov", vec![mem(Some(Register::Ebp), -0xC, 4), imm(0x1000)]),
        );
        assert_eq!(
            st.mem_value("4:ebp-0xC"),
            Some(&SymValue::Concrete(0x1000))
        );
    }

    #[test]
    fn unknown_argument_read_emits_arg_atom() {
        let mut st = MachineState::new();
        let v = st.read_mem(&MemRef {
            base: Some(Register::Ebp),
            index: None,
            scale: 1,
            disp: 0x8,
            size: 4,
        });
        assert_eq!(v, SymValue::Arg(0x8));
        assert_eq!(v.to_string(), "arg_8h");
        assert_eq!(st.mem_value("4:ebp+0x8"), Some(&SymValue::Arg(0x8)));
    }

    #[test]
    fn unknown_absolute_read_emits_counted_mem_cell() {
        let mut st = MachineState::new();
        let m = MemRef {
            base: None,
            index: None,
            scale: 1,
            disp: 0x1068EEC,
            size: 2,
        };
        let v = st.read_mem(&m);
        assert_eq!(v, SymValue::MemCell(0));
        assert_eq!(st.mem_value("2:0x1068EEC"), Some(&SymValue::MemCell(0)));
        // Second read returns the stored value without bumping the counter.
        assert_eq!(st.read_mem(&m), SymValue::MemCell(0));
        let other = st.read_mem(&MemRef {
            base: None,
            index: None,
            scale: 1,
            disp: 0x2000,
            size: 4,
        });
        assert_eq!(other, SymValue::MemCell(1));
    }

    #[test]
    fn write_then_read_round_trips() {
        let mut st = MachineState::new();
        let m = MemRef {
            base: Some(Register::Esi),
            index: None,
            scale: 1,
            disp: 4,
            size: 4,
        };
        st.write_mem(&m, SymValue::Concrete(7));
        assert_eq!(st.read_mem(&m), SymValue::Concrete(7));
    }

    #[test]
    fn zero_idiom_then_add_folds_concrete() {
        let mut st = MachineState::new();
        step(&mut st, &ins("xor", vec![reg("eax"), reg("eax")]));
        assert_eq!(st.register(Register::Eax), &SymValue::Concrete(0));
        step(&mut st, &ins("add", vec![reg("eax"), imm(0x25)]));
        step(&mut st, &ins("push", vec![reg("eax")]));
        assert_eq!(st.peek(0), SymValue::Concrete(0x25));
    }

    #[test]
    fn mixed_alu_builds_expressions() {
        let mut st = MachineState::new();
        step(&mut st, &ins("add", vec![reg("edx"), reg("ebx")]));
        step(&mut st, &ins("sub", vec![reg("edx"), imm(1)]));
        let v = st.register(Register::Edx);
        assert!(matches!(v, SymValue::Expr(ExprOp::Sub, ..)));
        assert_eq!(v.to_string(), "((edx + ebx) - 0x1)");
    }

    #[test]
    fn expression_depth_collapses_to_mem_cell() {
        let mut st = MachineState::new();
        for _ in 0..MAX_EXPR_DEPTH + 4 {
            step(&mut st, &ins("add", vec![reg("ecx"), reg("ebx")]));
        }
        assert!(st
            .register(Register::Ecx)
            .depth()
            .le(&MAX_EXPR_DEPTH));
    }

    #[test]
    fn pop_on_empty_stack_yields_star() {
        let mut st = MachineState::new();
        step(&mut st, &ins("pop", vec![reg("esi")]));
        assert_eq!(st.register(Register::Esi), &SymValue::Star);
        assert_eq!(st.stack_depth(), 0);
    }

    #[test]
    fn lea_takes_the_address_not_the_load() {
        let mut st = MachineState::new();
        step(
            &mut st,
            &ins("lea", vec![reg("eax"), mem(Some(Register::Ebp), -0x10, 4)]),
        );
        assert_eq!(st.register(Register::Eax), &SymValue::Var(0x10));
        step(&mut st, &ins("lea", vec![reg("ebx"), mem(None, 0x5000, 4)]));
        assert_eq!(st.register(Register::Ebx), &SymValue::Concrete(0x5000));
    }

    #[test]
    fn sub_register_writes_alias_the_full_register() {
        let mut st = MachineState::new();
        step(&mut st, &ins("mov", vec![reg("al"), imm(0x5)]));
        assert_eq!(st.register(Register::Eax), &SymValue::Concrete(0x5));
        step(&mut st, &ins("mov", vec![reg("cx"), reg("bx")]));
        assert!(matches!(st.register(Register::Ecx), SymValue::MemCell(_)));
    }

    #[test]
    fn esp_adjustments_move_whole_slots() {
        let mut st = MachineState::new();
        step(&mut st, &ins("push", vec![imm(1)]));
        step(&mut st, &ins("push", vec![imm(2)]));
        step(&mut st, &ins("sub", vec![reg("esp"), imm(8)]));
        assert_eq!(st.stack_depth(), 4);
        assert_eq!(st.peek(0), SymValue::Star);
        step(&mut st, &ins("add", vec![reg("esp"), imm(12)]));
        assert_eq!(st.stack_depth(), 1);
        assert_eq!(st.peek(0), SymValue::Concrete(1));
    }

    #[test]
    fn esp_relative_operands_hit_stack_slots() {
        let mut st = MachineState::new();
        step(&mut st, &ins("push", vec![imm(0xAA)]));
        step(&mut st, &ins("push", vec![imm(0xBB)]));
        step(
            &mut st,
            &ins("mov", vec![reg("eax"), mem(Some(Register::Esp), 4, 4)]),
        );
        assert_eq!(st.register(Register::Eax), &SymValue::Concrete(0xAA));
        step(
            &mut st,
            &ins("mov", vec![mem(Some(Register::Esp), 0, 4), imm(0xCC)]),
        );
        assert_eq!(st.peek(0), SymValue::Concrete(0xCC));
        // Out-of-range esp offsets fall back to keyed memory.
        step(
            &mut st,
            &ins("mov", vec![reg("ebx"), mem(Some(Register::Esp), 0x40, 4)]),
        );
        assert!(matches!(st.register(Register::Ebx), SymValue::MemCell(_)));
    }

    fn fixture(doc: serde_json::Value) -> (FunctionListing, Cfg) {
        let f = parse_listing(&doc.to_string()).unwrap().remove(0);
        let g = build_cfg(&f).unwrap();
        (f, g)
    }

    #[test]
    fn registry_open_call_captures_expected_arguments() {
        // push 1 / push 1 / push 0x146 / push [ebp-0x18] / push [ebp-0x1C]
        // / call RegOpenKeyEx-import
        let doc = serde_json::json!({
            "binary_id": "fx", "entry": 0x1000, "image_range": [0x1000, 0x9000],
            "instructions": [
                {"addr": 0x1000, "mn": "push", "ops": [{"k":"imm","val":1}]},
                {"addr": 0x1002, "mn": "push", "ops": [{"k":"imm","val":1}]},
                {"addr": 0x1004, "mn": "push", "ops": [{"k":"imm","val":0x146}]},
                {"addr": 0x1006, "mn": "push", "ops": [{"k":"mem","base":"ebp","disp":-0x18,"size":4}]},
                {"addr": 0x1008, "mn": "push", "ops": [{"k":"mem","base":"ebp","disp":-0x1C,"size":4}]},
                {"addr": 0x100A, "mn": "call", "ops": [{"k":"imm","val":0x20000}]},
                {"addr": 0x100F, "mn": "ret", "ops": []},
            ],
        });
        let (f, g) = fixture(doc);
        let mut imports = ImportTable::new();
        imports.insert(0x20000, "RegOpenKeyEx");
        let out = execute_path(&f, &g, &[0], &imports, &ApiSignatureDb::default_db());
        assert_eq!(out.records.len(), 1);
        let rec = &out.records[0];
        assert_eq!(rec.api.as_deref(), Some("RegOpenKeyEx"));
        assert_eq!(rec.n_args, 5);
        assert_eq!(
            &rec.raw_args[..5],
            &[
                RawArg::Var,
                RawArg::Var,
                RawArg::Int { v: 0x146 },
                RawArg::Int { v: 1 },
                RawArg::Int { v: 1 },
            ]
        );
        assert!(rec.raw_args[5..].iter().all(|a| *a == RawArg::Star));
        assert_eq!(rec.available_depth(), 5);
    }

    #[test]
    fn non_api_call_only_clobbers_eax() {
        let doc = serde_json::json!({
            "binary_id": "fx", "entry": 0x1000, "image_range": [0x1000, 0x9000],
            "instructions": [
                {"addr": 0x1000, "mn": "call", "ops": [{"k":"imm","val":0x1500}]},
                {"addr": 0x1005, "mn": "ret", "ops": []},
            ],
        });
        let (f, g) = fixture(doc);
        let out = execute_path(&f, &g, &[0], &ImportTable::new(), &ApiSignatureDb::default_db());
        assert!(out.records.is_empty());
    }

    #[test]
    fn shallow_stack_is_star_padded_and_drained() {
        let doc = serde_json::json!({
            "binary_id": "fx", "entry": 0x1000, "image_range": [0x1000, 0x9000],
            "instructions": [
                {"addr": 0x1000, "mn": "push", "ops": [{"k":"imm","val":3}]},
                {"addr": 0x1002, "mn": "push", "ops": [{"k":"imm","val":2}]},
                {"addr": 0x1004, "mn": "push", "ops": [{"k":"imm","val":1}]},
                {"addr": 0x1006, "mn": "call", "ops": [{"k":"imm","val":0x20000}]},
                {"addr": 0x100B, "mn": "ret", "ops": []},
            ],
        });
        let (f, g) = fixture(doc);
        let mut imports = ImportTable::new();
        imports.insert(0x20000, "RegOpenKeyEx"); // takes 5, only 3 present
        let out = execute_path(&f, &g, &[0], &imports, &ApiSignatureDb::default_db());
        let rec = &out.records[0];
        assert_eq!(
            &rec.raw_args[..3],
            &[
                RawArg::Int { v: 1 },
                RawArg::Int { v: 2 },
                RawArg::Int { v: 3 }
            ]
        );
        assert!(rec.raw_args[3..].iter().all(|a| *a == RawArg::Star));
        assert_eq!(rec.available_depth(), 3);
    }

    #[test]
    fn eax_becomes_ret_after_any_call() {
        // A local helper call followed by `push eax` plants a ret value that
        // the next API call observes on the stack.
        let doc = serde_json::json!({
            "binary_id": "fx", "entry": 0x1000, "image_range": [0x1000, 0x9000],
            "instructions": [
                {"addr": 0x1000, "mn": "call", "ops": [{"k":"imm","val":0x1800}]},
                {"addr": 0x1005, "mn": "push", "ops": [{"k":"reg","name":"eax"}]},
                {"addr": 0x1007, "mn": "push", "ops": [{"k":"imm","val":2}]},
                {"addr": 0x1009, "mn": "push", "ops": [{"k":"imm","val":1}]},
                {"addr": 0x100B, "mn": "call", "ops": [{"k":"imm","val":0x20000}]},
                {"addr": 0x1010, "mn": "ret", "ops": []},
            ],
        });
        let (f, g) = fixture(doc);
        let mut imports = ImportTable::new();
        imports.insert(0x20000, "HeapAlloc");
        let out = execute_path(&f, &g, &[0], &imports, &ApiSignatureDb::default_db());
        let rec = &out.records[0];
        assert_eq!(
            &rec.raw_args[..3],
            &[RawArg::Int { v: 1 }, RawArg::Int { v: 2 }, RawArg::Ret]
        );
    }

    #[test]
    fn import_without_signature_is_tallied_not_recorded() {
        let doc = serde_json::json!({
            "binary_id": "fx", "entry": 0x1000, "image_range": [0x1000, 0x9000],
            "instructions": [
                {"addr": 0x1000, "mn": "call", "ops": [{"k":"imm","val":0x20000}]},
                {"addr": 0x1005, "mn": "ret", "ops": []},
            ],
        });
        let (f, g) = fixture(doc);
        let mut imports = ImportTable::new();
        imports.insert(0x20000, "ExitProcess");
        let out = execute_path(&f, &g, &[0], &imports, &ApiSignatureDb::default_db());
        assert!(out.records.is_empty());
        assert_eq!(out.skipped_no_signature, 1);
    }

    #[test]
    fn out_of_range_argument_counts_are_rejected_on_parse() {
        let line = r#"{"binary_id":"b","call_addr":1,"api":"X","n_args":2,"raw_args":[{"t":"star"},{"t":"star"},{"t":"star"},{"t":"star"},{"t":"star"},{"t":"star"},{"t":"star"},{"t":"star"},{"t":"star"},{"t":"star"},{"t":"star"},{"t":"star"}]}"#;
        assert!(parse_records(line).is_err());
    }

    #[test]
    fn odd_esp_adjustments_round_down_to_whole_slots() {
        let mut st = MachineState::new();
        step(&mut st, &ins("sub", vec![reg("esp"), imm(6)]));
        assert_eq!(st.stack_depth(), 1);
    }

    #[test]
    fn records_round_trip_through_jsonl() {
        let rec = ApiCallRecord {
            binary_id: "b".into(),
            call_addr: 0x401000,
            api: Some("ReadFile".into()),
            n_args: 5,
            raw_args: vec![
                RawArg::Var,
                RawArg::Int { v: 0x146 },
                RawArg::Reg,
                RawArg::Ret,
                RawArg::Expr,
                RawArg::Mem,
                RawArg::Arg,
                RawArg::Star,
                RawArg::Star,
                RawArg::Star,
                RawArg::Star,
                RawArg::Star,
            ],
            image_range: Some((0x400000, 0x480000)),
        };
        let text = serialize_records(std::slice::from_ref(&rec));
        assert!(text.contains(r#"{"t":"int","v":326}"#));
        let back = parse_records(&text).unwrap();
        assert_eq!(back, vec![rec]);
    }
}
