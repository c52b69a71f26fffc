//! Synthetic corpus generation: function listings with planted API calls and
//! independently recorded ground truth.
//!
//! Each API has a per-slot generative profile over argument kinds (constants,
//! scaled integers, pointers, locals, return values, ...). Profiles overlap
//! deliberately — registry APIs share hive handles, converter APIs share code
//! pages, and several same-length pairs share token sets in different orders
//! — so the classes are separable but not trivially so.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::listing::{ApiSignatureDb, FunctionListing, ImportTable};
use crate::tokens::ConstantWhitelist;
use crate::x86::{Instruction, MemRef, Operand, Register};

/// One way of materializing an argument push.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ArgGen {
    /// `push <one of these values>`.
    Const { values: Vec<u32> },
    /// `push <arbitrary integer with this hex-digit count>`; 4 or 8 digit
    /// values avoid the pointer band and whitelist by construction.
    Scaled { hex_len: u8 },
    /// An address inside the image (string/data territory).
    Pointer,
    /// A callee-preserved register still holding its entry value.
    Register,
    /// `push dword [ebp-X]` of an unwritten local.
    LocalVar,
    /// `lea r, [ebp-X]; push r` — address of a local.
    LeaVar,
    /// `call <local helper>; push eax`.
    RetValue,
    /// A small arithmetic expression over a preserved register.
    ExprVal,
    /// A load from a data-section global.
    MemLoad,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightedGen {
    pub gen: ArgGen,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlotProfile {
    pub choices: Vec<WeightedGen>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApiProfile {
    pub slots: Vec<SlotProfile>,
}

/// Full description of a synthetic corpus; JSON-serializable so runs are
/// reproducible from a config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub seed: u64,
    pub binaries: usize,
    pub calls_per_api: usize,
    pub calls_per_function: (usize, usize),
    /// Probability of a junk instruction at each junk point.
    pub junk_rate: f64,
    /// Probability of leftover pushes below an argument block.
    pub junk_push_rate: f64,
    /// Probability of a conditional-branch diamond before a call.
    pub branch_density: f64,
    /// Probability a call goes through a one-instruction thunk.
    pub thunk_rate: f64,
    /// Probability a function ends in a tail jump instead of `ret`.
    pub tail_jump_rate: f64,
    pub image_base: u32,
    pub image_size: u32,
    pub profiles: BTreeMap<String, ApiProfile>,
}

impl SynthSpec {
    pub fn from_json(text: &str) -> Result<SynthSpec> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serialization cannot fail")
    }

    pub fn image_range(&self) -> (u32, u32) {
        (self.image_base, self.image_base + self.image_size)
    }

    pub fn validate(&self, sigs: &ApiSignatureDb) -> Result<()> {
        if self.binaries == 0 || self.calls_per_api == 0 {
            return Err(Error::validation("binaries and calls_per_api must be positive"));
        }
        let (lo, hi) = self.calls_per_function;
        if lo == 0 || lo > hi {
            return Err(Error::validation("bad calls_per_function range"));
        }
        for name in sigs.names() {
            let profile = self
                .profiles
                .get(name)
                .ok_or_else(|| Error::validation(format!("no profile for API `{name}`")))?;
            let want = sigs.get(name).expect("name comes from the db") as usize;
            if profile.slots.len() != want {
                return Err(Error::validation(format!(
                    "profile for `{name}` has {} slots, signature says {want}",
                    profile.slots.len()
                )));
            }
            for (i, slot) in profile.slots.iter().enumerate() {
                if slot.choices.is_empty() {
                    return Err(Error::validation(format!("`{name}` slot {i} is empty")));
                }
                if slot.choices.iter().any(|c| !(c.weight > 0.0)) {
                    return Err(Error::validation(format!(
                        "`{name}` slot {i} has a non-positive weight"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Ground truth for one planted call, recorded by the generator itself.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub binary_id: String,
    pub call_addr: u32,
    pub api: String,
    pub n_args: u8,
}

pub fn serialize_truth(records: &[TruthRecord]) -> String {
    let mut out = String::new();
    for r in records {
        let _ = writeln!(out, "{}", serde_json::to_string(r).expect("truth serialization"));
    }
    out
}

pub fn parse_truth(text: &str) -> Result<Vec<TruthRecord>> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(raw).map_err(|e| Error::parse(idx + 1, e.to_string()))?);
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct SynthOutput {
    pub functions: Vec<FunctionListing>,
    pub imports: ImportTable,
    pub truth: Vec<TruthRecord>,
}

// Layout offsets within the image.
const CODE_OFFSET: u32 = 0x1000;
const STRING_OFFSET: u32 = 0x20000;
const DATA_OFFSET: u32 = 0x30000;
const HELPER_OFFSET: u32 = 0x70000;
const IMPORT_BASE: u32 = 0x7C80_0000;

/// Assembles one function: instructions are staged with symbolic branch
/// labels, then addresses are assigned and labels patched.
struct FunctionBuilder {
    items: Vec<(String, Vec<PendingOp>)>,
    label_at: BTreeMap<usize, usize>,
    next_label: usize,
}

enum PendingOp {
    Ready(Operand),
    LabelRef(usize),
}

struct AssembledFunction {
    instructions: Vec<Instruction>,
    /// Address of each staged item.
    item_addrs: Vec<u32>,
    next_cursor: u32,
}

impl FunctionBuilder {
    fn new() -> Self {
        FunctionBuilder {
            items: Vec::new(),
            label_at: BTreeMap::new(),
            next_label: 0,
        }
    }

    fn ins(&mut self, mn: &str, ops: Vec<Operand>) -> usize {
        self.items
            .push((mn.to_string(), ops.into_iter().map(PendingOp::Ready).collect()));
        self.items.len() - 1
    }

    fn branch_to(&mut self, mn: &str, label: usize) {
        self.items
            .push((mn.to_string(), vec![PendingOp::LabelRef(label)]));
    }

    fn new_label(&mut self) -> usize {
        self.next_label += 1;
        self.next_label - 1
    }

    /// Bind a label to the next emitted item.
    fn place(&mut self, label: usize) {
        self.label_at.insert(label, self.items.len());
    }

    fn assemble(self, entry: u32, rng: &mut StdRng) -> AssembledFunction {
        let mut addrs = Vec::with_capacity(self.items.len());
        let mut cursor = entry;
        for _ in &self.items {
            addrs.push(cursor);
            cursor += rng.random_range(2..=6);
        }
        let instructions = self
            .items
            .into_iter()
            .enumerate()
            .map(|(i, (mn, ops))| {
                let ops: Vec<Operand> = ops
                    .into_iter()
                    .map(|op| match op {
                        PendingOp::Ready(o) => o,
                        PendingOp::LabelRef(l) => {
                            let item = self.label_at[&l];
                            Operand::Imm { val: addrs[item] }
                        }
                    })
                    .collect();
                Instruction::new(addrs[i], mn, ops).expect("generated instructions are well-formed")
            })
            .collect();
        AssembledFunction {
            instructions,
            item_addrs: addrs,
            next_cursor: (cursor + 15) & !15,
        }
    }
}

fn reg_op(reg: Register) -> Operand {
    Operand::Reg { reg, size: 4 }
}

fn imm_op(val: u32) -> Operand {
    Operand::Imm { val }
}

fn local_op(offset: u32) -> Operand {
    Operand::Mem(MemRef {
        base: Some(Register::Ebp),
        index: None,
        scale: 1,
        disp: -(offset as i32),
        size: 4,
    })
}

fn abs_op(addr: u32) -> Operand {
    Operand::Mem(MemRef {
        base: None,
        index: None,
        scale: 1,
        disp: addr as i32,
        size: 4,
    })
}

/// Per-function generation context.
struct FnCtx {
    /// 4-aligned offsets for argument locals, below the junk region.
    next_arg_local: u32,
}

impl FnCtx {
    fn new() -> Self {
        FnCtx { next_arg_local: 0x8 }
    }

    fn arg_local(&mut self) -> u32 {
        let off = self.next_arg_local;
        self.next_arg_local = if off >= 0x3C { 0x8 } else { off + 4 };
        off
    }
}

const PRESERVED: [Register; 3] = [Register::Esi, Register::Edi, Register::Ebx];

fn pick_weighted<'a>(rng: &mut StdRng, slot: &'a SlotProfile) -> &'a ArgGen {
    let total: f64 = slot.choices.iter().map(|c| c.weight).sum();
    let mut x = rng.random::<f64>() * total;
    for c in &slot.choices {
        x -= c.weight;
        if x <= 0.0 {
            return &c.gen;
        }
    }
    &slot.choices.last().expect("validated non-empty").gen
}

fn sample_scaled(rng: &mut StdRng, hex_len: u8, wl: &ConstantWhitelist) -> u32 {
    loop {
        let v = match hex_len {
            1 => rng.random_range(0x1..=0xF),
            2 => rng.random_range(0x10..=0xFF),
            3 => rng.random_range(0x100..=0xFFF),
            4 => rng.random_range(0x1000..=0xFFFF),
            8 => rng.random_range(0x8000_0000..=0xFFFF_FFFF),
            n => {
                let lo = 16u32.pow(u32::from(n) - 1);
                let hi = 16u64.pow(u32::from(n)) - 1;
                rng.random_range(lo..=hi.min(u64::from(u32::MAX)) as u32)
            }
        };
        if !wl.is_predefined(v) {
            return v;
        }
    }
}

struct Generator<'a> {
    spec: &'a SynthSpec,
    wl: ConstantWhitelist,
    rng: StdRng,
}

impl<'a> Generator<'a> {
    fn junk_instruction(&mut self, fb: &mut FunctionBuilder) {
        let joff = 0x40 + 4 * self.rng.random_range(0..16);
        match self.rng.random_range(0..9) {
            0 => {
                let v = sample_scaled(&mut self.rng, 4, &self.wl);
                fb.ins("mov", vec![reg_op(Register::Ecx), imm_op(v)]);
            }
            1 => {
                fb.ins("xor", vec![reg_op(Register::Edx), reg_op(Register::Edx)]);
            }
            2 => {
                let v = self.rng.random_range(1..0x40);
                fb.ins("add", vec![reg_op(Register::Ecx), imm_op(v)]);
            }
            3 => {
                fb.ins("inc", vec![reg_op(Register::Edx)]);
            }
            4 => {
                fb.ins("dec", vec![reg_op(Register::Ecx)]);
            }
            5 => {
                fb.ins("cmp", vec![reg_op(Register::Ecx), imm_op(0)]);
            }
            6 => {
                fb.ins("test", vec![reg_op(Register::Ecx), reg_op(Register::Ecx)]);
            }
            7 => {
                fb.ins("mov", vec![local_op(joff), reg_op(Register::Ecx)]);
            }
            _ => {
                fb.ins("mov", vec![reg_op(Register::Edx), local_op(joff)]);
            }
        }
    }

    fn junk_run(&mut self, fb: &mut FunctionBuilder, forced: usize) {
        for _ in 0..forced {
            self.junk_instruction(fb);
        }
        let mut extra = 0;
        while extra < 3 && self.rng.random::<f64>() < self.spec.junk_rate {
            self.junk_instruction(fb);
            extra += 1;
        }
    }

    fn emit_argument(&mut self, fb: &mut FunctionBuilder, ctx: &mut FnCtx, gen: &ArgGen) {
        match gen {
            ArgGen::Const { values } => {
                let v = values[self.rng.random_range(0..values.len())];
                let style = self.rng.random::<f64>();
                if v == 0 && style < 0.3 {
                    fb.ins("xor", vec![reg_op(Register::Ecx), reg_op(Register::Ecx)]);
                    fb.ins("push", vec![reg_op(Register::Ecx)]);
                } else if v != 0 && style < 0.12 {
                    fb.ins("xor", vec![reg_op(Register::Ecx), reg_op(Register::Ecx)]);
                    fb.ins("add", vec![reg_op(Register::Ecx), imm_op(v)]);
                    fb.ins("push", vec![reg_op(Register::Ecx)]);
                } else {
                    fb.ins("push", vec![imm_op(v)]);
                }
            }
            ArgGen::Scaled { hex_len } => {
                let v = sample_scaled(&mut self.rng, *hex_len, &self.wl);
                if self.rng.random::<f64>() < 0.2 {
                    fb.ins("mov", vec![reg_op(Register::Ecx), imm_op(v)]);
                    fb.ins("push", vec![reg_op(Register::Ecx)]);
                } else {
                    fb.ins("push", vec![imm_op(v)]);
                }
            }
            ArgGen::Pointer => {
                let v = self.spec.image_base
                    + STRING_OFFSET
                    + 4 * self.rng.random_range(0..0x1000);
                fb.ins("push", vec![imm_op(v)]);
            }
            ArgGen::Register => {
                let r = PRESERVED[self.rng.random_range(0..PRESERVED.len())];
                fb.ins("push", vec![reg_op(r)]);
            }
            ArgGen::LocalVar => {
                fb.ins("push", vec![local_op(ctx.arg_local())]);
            }
            ArgGen::LeaVar => {
                let r = if self.rng.random::<bool>() {
                    Register::Ecx
                } else {
                    Register::Edx
                };
                fb.ins("lea", vec![reg_op(r), local_op(ctx.arg_local())]);
                fb.ins("push", vec![reg_op(r)]);
            }
            ArgGen::RetValue => {
                let helper = self.spec.image_base
                    + HELPER_OFFSET
                    + 8 * self.rng.random_range(0..0x200);
                fb.ins("call", vec![imm_op(helper)]);
                fb.ins("push", vec![reg_op(Register::Eax)]);
            }
            ArgGen::ExprVal => {
                let r = PRESERVED[self.rng.random_range(0..PRESERVED.len())];
                fb.ins("mov", vec![reg_op(Register::Ecx), reg_op(r)]);
                let mn = if self.rng.random::<bool>() { "add" } else { "sub" };
                let v = self.rng.random_range(1..0x100);
                fb.ins(mn, vec![reg_op(Register::Ecx), imm_op(v)]);
                fb.ins("push", vec![reg_op(Register::Ecx)]);
            }
            ArgGen::MemLoad => {
                let g = self.spec.image_base + DATA_OFFSET + 4 * self.rng.random_range(0..0x800);
                fb.ins("mov", vec![reg_op(Register::Ecx), abs_op(g)]);
                fb.ins("push", vec![reg_op(Register::Ecx)]);
            }
        }
    }

    /// Emit a call with its argument pushes (stdcall: last argument first).
    /// Returns the item index of the `call`.
    fn emit_call(
        &mut self,
        fb: &mut FunctionBuilder,
        ctx: &mut FnCtx,
        profile: &ApiProfile,
        target: u32,
    ) -> usize {
        if self.rng.random::<f64>() < self.spec.branch_density {
            let join = fb.new_label();
            fb.branch_to("jnz", join);
            self.junk_run(fb, 1);
            fb.place(join);
        }
        if self.rng.random::<f64>() < self.spec.junk_push_rate {
            // Residue below the arguments, as earlier pushes would leave.
            let n = self.rng.random_range(1..=2);
            for _ in 0..n {
                let v = sample_scaled(&mut self.rng, 4, &self.wl);
                fb.ins("push", vec![imm_op(v)]);
            }
        }
        for slot in profile.slots.iter().rev() {
            self.junk_run(fb, 0);
            let gen = pick_weighted(&mut self.rng, slot).clone();
            self.emit_argument(fb, ctx, &gen);
        }
        fb.ins("call", vec![imm_op(target)])
    }
}

/// Generate the corpus. Deterministic: the same spec produces byte-identical
/// listings, imports and truth.
pub fn generate(spec: &SynthSpec) -> Result<SynthOutput> {
    let sigs = ApiSignatureDb::default_db();
    spec.validate(&sigs)?;
    let mut gen = Generator {
        spec,
        wl: ConstantWhitelist::default(),
        rng: StdRng::seed_from_u64(spec.seed),
    };

    // Import addresses per API, outside the image.
    let mut imports = ImportTable::new();
    let api_names: Vec<String> = sigs.names().map(str::to_string).collect();
    let import_addr: BTreeMap<&str, u32> = api_names
        .iter()
        .enumerate()
        .map(|(i, n)| (n.as_str(), IMPORT_BASE + 0x10 * i as u32))
        .collect();
    for (name, addr) in &import_addr {
        imports.insert(*addr, *name);
    }

    // Global call plan: calls_per_api of each name, shuffled, then cut into
    // per-function runs dealt round-robin over binaries.
    let mut plan: Vec<usize> = (0..api_names.len())
        .flat_map(|i| std::iter::repeat_n(i, spec.calls_per_api))
        .collect();
    for i in 0..plan.len().saturating_sub(1) {
        let j = gen.rng.random_range(i..plan.len());
        plan.swap(i, j);
    }
    let mut function_specs: Vec<Vec<usize>> = Vec::new();
    let mut cursor = 0usize;
    while cursor < plan.len() {
        let (lo, hi) = spec.calls_per_function;
        let take = gen.rng.random_range(lo..=hi).min(plan.len() - cursor);
        function_specs.push(plan[cursor..cursor + take].to_vec());
        cursor += take;
    }
    let mut per_binary: Vec<Vec<Vec<usize>>> = vec![Vec::new(); spec.binaries];
    for (i, fs) in function_specs.into_iter().enumerate() {
        per_binary[i % spec.binaries].push(fs);
    }

    let mut functions = Vec::new();
    let mut truth = Vec::new();
    for (b, fn_specs) in per_binary.into_iter().enumerate() {
        let binary_id = format!("bin{b:02}");
        let mut cursor = spec.image_base + CODE_OFFSET;
        let mut entries: Vec<u32> = Vec::new();

        // Thunks first: one-instruction jumps to a subset of the imports.
        let mut thunk_addr: BTreeMap<&str, u32> = BTreeMap::new();
        for name in &api_names {
            if gen.rng.random::<f64>() < 0.6 {
                let mut fb = FunctionBuilder::new();
                fb.ins("jmp", vec![imm_op(import_addr[name.as_str()])]);
                let asm = fb.assemble(cursor, &mut gen.rng);
                thunk_addr.insert(name.as_str(), cursor);
                functions.push(FunctionListing {
                    binary_id: binary_id.clone(),
                    entry_addr: cursor,
                    image_range: spec.image_range(),
                    instructions: asm.instructions,
                });
                cursor = asm.next_cursor;
            }
        }

        for api_ids in fn_specs {
            let entry = cursor;
            let mut fb = FunctionBuilder::new();
            let mut ctx = FnCtx::new();
            fb.ins("push", vec![reg_op(Register::Ebp)]);
            fb.ins("mov", vec![reg_op(Register::Ebp), reg_op(Register::Esp)]);
            if gen.rng.random::<f64>() < 0.25 {
                let frame = 8 * gen.rng.random_range(1..=4);
                fb.ins("sub", vec![reg_op(Register::Esp), imm_op(frame)]);
            }

            let mut call_items = Vec::new();
            for &api_id in &api_ids {
                let name = api_names[api_id].as_str();
                let profile = &spec.profiles[name];
                let use_thunk = gen.rng.random::<f64>() < spec.thunk_rate;
                let target = match (use_thunk, thunk_addr.get(name)) {
                    (true, Some(&t)) => t,
                    _ => import_addr[name],
                };
                let item = gen.emit_call(&mut fb, &mut ctx, profile, target);
                call_items.push((item, api_id));
                // Occasionally a loop of junk between calls.
                if gen.rng.random::<f64>() < 0.1 {
                    let back = fb.new_label();
                    fb.place(back);
                    gen.junk_run(&mut fb, 1);
                    fb.ins("dec", vec![reg_op(Register::Ecx)]);
                    fb.branch_to("jnz", back);
                }
            }

            fb.ins("mov", vec![reg_op(Register::Esp), reg_op(Register::Ebp)]);
            fb.ins("pop", vec![reg_op(Register::Ebp)]);
            if !entries.is_empty() && gen.rng.random::<f64>() < spec.tail_jump_rate {
                let t = entries[gen.rng.random_range(0..entries.len())];
                fb.ins("jmp", vec![imm_op(t)]);
            } else {
                fb.ins("ret", vec![]);
            }

            let asm = fb.assemble(entry, &mut gen.rng);
            debug_assert!(
                asm.next_cursor < spec.image_base + HELPER_OFFSET,
                "code region overflowed into helper territory"
            );
            for (item, api_id) in call_items {
                let name = &api_names[api_id];
                truth.push(TruthRecord {
                    binary_id: binary_id.clone(),
                    call_addr: asm.item_addrs[item],
                    api: name.clone(),
                    n_args: sigs.get(name).expect("planned APIs are in the db"),
                });
            }
            entries.push(entry);
            functions.push(FunctionListing {
                binary_id: binary_id.clone(),
                entry_addr: entry,
                image_range: spec.image_range(),
                instructions: asm.instructions,
            });
            cursor = asm.next_cursor;
        }
    }

    Ok(SynthOutput {
        functions,
        imports,
        truth,
    })
}

fn slot(choices: Vec<(ArgGen, f64)>) -> SlotProfile {
    SlotProfile {
        choices: choices
            .into_iter()
            .map(|(gen, weight)| WeightedGen { gen, weight })
            .collect(),
    }
}

fn c(values: &[u32]) -> ArgGen {
    ArgGen::Const {
        values: values.to_vec(),
    }
}

const SC4: ArgGen = ArgGen::Scaled { hex_len: 4 };
const SC8: ArgGen = ArgGen::Scaled { hex_len: 8 };

/// The shipped per-API profiles.
pub fn default_profiles() -> BTreeMap<String, ApiProfile> {
    use ArgGen::{ExprVal, LeaVar, LocalVar, MemLoad, Pointer, Register, RetValue};
    let mut p = BTreeMap::new();
    let mut add = |name: &str, slots: Vec<SlotProfile>| {
        p.insert(name.to_string(), ApiProfile { slots });
    };

    add(
        "CheckDlgButton",
        vec![
            slot(vec![(LocalVar, 0.7), (RetValue, 0.3)]),
            slot(vec![(SC4, 0.7), (c(&[0x3E8, 0x64]), 0.3)]),
            slot(vec![(c(&[0, 1, 2]), 1.0)]),
        ],
    );
    add(
        "CoCreateInstance",
        vec![
            slot(vec![(Pointer, 0.8), (MemLoad, 0.2)]),
            slot(vec![(c(&[0]), 1.0)]),
            slot(vec![(c(&[1, 4, 5, 0x17]), 1.0)]),
            slot(vec![(Pointer, 0.8), (LeaVar, 0.2)]),
            slot(vec![(LeaVar, 0.9), (LocalVar, 0.1)]),
        ],
    );
    add(
        "CompareString",
        vec![
            slot(vec![(c(&[0x400, 0x409]), 0.7), (RetValue, 0.3)]),
            slot(vec![(c(&[0, 1]), 1.0)]),
            slot(vec![(Pointer, 0.5), (LocalVar, 0.5)]),
            slot(vec![(c(&[0xFFFFFFFF]), 0.5), (SC4, 0.5)]),
            slot(vec![(Pointer, 0.5), (LocalVar, 0.5)]),
            slot(vec![(c(&[0xFFFFFFFF]), 0.4), (SC4, 0.6)]),
        ],
    );
    add(
        "CreateFile",
        vec![
            slot(vec![(Pointer, 0.7), (LocalVar, 0.3)]),
            slot(vec![(c(&[0x80000000, 0x40000000, 0xC0000000]), 1.0)]),
            slot(vec![(c(&[0, 1, 2, 3]), 1.0)]),
            slot(vec![(c(&[0]), 0.7), (LocalVar, 0.3)]),
            slot(vec![(c(&[1, 2, 3, 4]), 1.0)]),
            slot(vec![(c(&[0x80]), 0.8), (SC8, 0.2)]),
            slot(vec![(c(&[0]), 0.8), (RetValue, 0.2)]),
        ],
    );
    add(
        "CreateWindowEx",
        vec![
            slot(vec![(c(&[0, 0x200]), 1.0)]),
            slot(vec![(Pointer, 0.7), (MemLoad, 0.3)]),
            slot(vec![(Pointer, 0.6), (LocalVar, 0.4)]),
            slot(vec![(c(&[0xCF0000, 0x10000000, 0x40000000]), 1.0)]),
            slot(vec![(SC4, 0.7), (c(&[0x64]), 0.3)]),
            slot(vec![(SC4, 0.7), (c(&[0x64]), 0.3)]),
            slot(vec![(SC4, 1.0)]),
            slot(vec![(SC4, 1.0)]),
            slot(vec![(LocalVar, 0.6), (c(&[0]), 0.4)]),
            slot(vec![(c(&[0]), 0.8), (LocalVar, 0.2)]),
            slot(vec![(LocalVar, 0.5), (RetValue, 0.5)]),
            slot(vec![(c(&[0]), 0.7), (LeaVar, 0.3)]),
        ],
    );
    add(
        "DeviceIoControl",
        vec![
            slot(vec![(LocalVar, 0.6), (RetValue, 0.4)]),
            slot(vec![(SC8, 0.8), (SC4, 0.2)]),
            slot(vec![(LeaVar, 0.5), (Pointer, 0.5)]),
            slot(vec![(SC4, 1.0)]),
            slot(vec![(LeaVar, 0.6), (Pointer, 0.4)]),
            slot(vec![(SC4, 1.0)]),
            slot(vec![(LeaVar, 1.0)]),
            slot(vec![(c(&[0]), 0.8), (LocalVar, 0.2)]),
        ],
    );
    add(
        "FormatMessage",
        vec![
            slot(vec![(SC4, 1.0)]),
            slot(vec![(c(&[0]), 0.7), (Pointer, 0.3)]),
            slot(vec![(RetValue, 0.4), (SC4, 0.6)]),
            slot(vec![(c(&[0x400, 0]), 1.0)]),
            slot(vec![(LeaVar, 0.6), (Pointer, 0.4)]),
            slot(vec![(c(&[0]), 0.7), (SC4, 0.3)]),
            slot(vec![(c(&[0]), 0.8), (LeaVar, 0.2)]),
        ],
    );
    add(
        "GetLocaleInfo",
        vec![
            slot(vec![(c(&[0x400, 0x800]), 0.5), (RetValue, 0.25), (MemLoad, 0.25)]),
            slot(vec![(c(&[2, 3]), 0.5), (SC4, 0.5)]),
            slot(vec![(LocalVar, 0.4), (Pointer, 0.3), (MemLoad, 0.3)]),
            slot(vec![(c(&[2, 4]), 0.6), (SC4, 0.4)]),
        ],
    );
    add(
        "HeapAlloc",
        vec![
            slot(vec![(RetValue, 0.5), (LocalVar, 0.3), (MemLoad, 0.2)]),
            slot(vec![(c(&[0, 8]), 1.0)]),
            slot(vec![(SC4, 0.8), (ExprVal, 0.2)]),
        ],
    );
    add(
        "LoadString",
        vec![
            slot(vec![(LocalVar, 0.5), (RetValue, 0.3), (Register, 0.2)]),
            slot(vec![(SC4, 1.0)]),
            slot(vec![(Pointer, 0.6), (LocalVar, 0.4)]),
            slot(vec![(c(&[0x100, 0x104, 0x40]), 1.0)]),
        ],
    );
    add(
        "MessageBox",
        vec![
            slot(vec![(c(&[0]), 0.6), (LocalVar, 0.4)]),
            slot(vec![(Pointer, 0.8), (MemLoad, 0.2)]),
            slot(vec![(Pointer, 0.7), (MemLoad, 0.3)]),
            slot(vec![(c(&[0, 0x10, 0x20, 0x24, 0x30, 0x40]), 1.0)]),
        ],
    );
    add(
        "MultiByteToWideChar",
        vec![
            slot(vec![(c(&[0, 0xFDE9, 0x4E4]), 1.0)]),
            slot(vec![(c(&[0, 8]), 1.0)]),
            slot(vec![(Pointer, 0.5), (LocalVar, 0.5)]),
            slot(vec![(c(&[0xFFFFFFFF]), 0.6), (SC4, 0.4)]),
            slot(vec![(LeaVar, 0.5), (LocalVar, 0.5)]),
            slot(vec![(SC4, 0.7), (c(&[0]), 0.3)]),
        ],
    );
    // PostMessage and SendMessage share token sets with slots 3 and 4
    // swapped; presence alone cannot tell them apart.
    add(
        "PostMessage",
        vec![
            slot(vec![(LocalVar, 0.7), (Register, 0.3)]),
            slot(vec![(c(&[0xC, 0xD, 0x111]), 1.0)]),
            slot(vec![(LocalVar, 0.6), (ExprVal, 0.4)]),
            slot(vec![(c(&[0, 1]), 1.0)]),
        ],
    );
    add(
        "SendMessage",
        vec![
            slot(vec![(LocalVar, 0.7), (Register, 0.3)]),
            slot(vec![(c(&[0xC, 0xD, 0x111]), 1.0)]),
            slot(vec![(c(&[0, 1]), 1.0)]),
            slot(vec![(LocalVar, 0.6), (ExprVal, 0.4)]),
        ],
    );
    // ReadFile and WriteFile likewise differ mainly in argument order.
    add(
        "ReadFile",
        vec![
            slot(vec![(LocalVar, 0.6), (RetValue, 0.4)]),
            slot(vec![(Pointer, 1.0)]),
            slot(vec![(SC4, 1.0)]),
            slot(vec![(LeaVar, 1.0)]),
            slot(vec![(c(&[0]), 1.0)]),
        ],
    );
    add(
        "WriteFile",
        vec![
            slot(vec![(LocalVar, 0.6), (RetValue, 0.4)]),
            slot(vec![(LocalVar, 1.0)]),
            slot(vec![(Pointer, 1.0)]),
            slot(vec![(SC4, 1.0)]),
            slot(vec![(c(&[0]), 1.0)]),
        ],
    );
    add(
        "RegCreateKeyEx",
        vec![
            slot(vec![(c(&[0x80000001, 0x80000002]), 0.6), (LocalVar, 0.4)]),
            slot(vec![(Pointer, 0.6), (LocalVar, 0.4)]),
            slot(vec![(c(&[0]), 1.0)]),
            slot(vec![(c(&[0]), 0.6), (Pointer, 0.4)]),
            slot(vec![(c(&[0]), 1.0)]),
            slot(vec![(c(&[0x146, 0x170, 1]), 1.0)]),
            slot(vec![(c(&[0]), 0.7), (LocalVar, 0.3)]),
            slot(vec![(LeaVar, 1.0)]),
            slot(vec![(LeaVar, 0.7), (c(&[0]), 0.3)]),
        ],
    );
    add(
        "RegOpenKeyEx",
        vec![
            slot(vec![(c(&[0x80000000, 0x80000001, 0x80000002]), 0.55), (LocalVar, 0.45)]),
            slot(vec![(Pointer, 0.6), (LocalVar, 0.4)]),
            slot(vec![(c(&[0x146, 0x170, 0]), 1.0)]),
            // Access-mask constants above 0x10000 would read as pointers
            // under the default band; stick to the low flag values.
            slot(vec![(c(&[1, 2]), 1.0)]),
            slot(vec![(LeaVar, 0.6), (c(&[1]), 0.4)]),
        ],
    );
    add(
        "RegQueryValueEx",
        vec![
            slot(vec![(LocalVar, 0.8), (c(&[0x80000002]), 0.2)]),
            slot(vec![(Pointer, 0.7), (LocalVar, 0.3)]),
            slot(vec![(c(&[0]), 1.0)]),
            slot(vec![(LeaVar, 0.7), (c(&[0]), 0.3)]),
            slot(vec![(LeaVar, 0.8), (LocalVar, 0.2)]),
            slot(vec![(LeaVar, 1.0)]),
        ],
    );
    add(
        "RegSetValueEx",
        vec![
            slot(vec![(LocalVar, 0.8), (c(&[0x80000001]), 0.2)]),
            slot(vec![(Pointer, 0.7), (LocalVar, 0.3)]),
            slot(vec![(c(&[0]), 1.0)]),
            slot(vec![(c(&[1, 2, 4]), 1.0)]),
            slot(vec![(Pointer, 0.6), (LocalVar, 0.4)]),
            slot(vec![(SC4, 0.7), (c(&[4]), 0.3)]),
        ],
    );
    add(
        "SendDlgItemMessage",
        vec![
            slot(vec![(LocalVar, 0.7), (MemLoad, 0.3)]),
            slot(vec![(SC4, 0.5), (c(&[0x3E8]), 0.5)]),
            slot(vec![(c(&[0xC, 0xD, 0x111]), 0.6), (RetValue, 0.2), (ExprVal, 0.2)]),
            slot(vec![(ExprVal, 0.4), (LocalVar, 0.4), (c(&[0]), 0.2)]),
            slot(vec![(LocalVar, 0.6), (ExprVal, 0.2), (c(&[1]), 0.2)]),
        ],
    );
    add(
        "SetDlgItemText",
        vec![
            slot(vec![(LocalVar, 0.8), (Register, 0.2)]),
            slot(vec![(SC4, 0.6), (c(&[0x64, 0x3E8]), 0.4)]),
            slot(vec![(Pointer, 0.7), (LocalVar, 0.3)]),
        ],
    );
    add(
        "SetTimer",
        vec![
            slot(vec![(LocalVar, 0.6), (c(&[0]), 0.4)]),
            slot(vec![(SC4, 0.5), (c(&[1, 2]), 0.5)]),
            slot(vec![(c(&[0x3E8, 0x1388]), 0.7), (SC4, 0.3)]),
            slot(vec![(c(&[0]), 0.6), (Pointer, 0.4)]),
        ],
    );
    add(
        "SetWindowPos",
        vec![
            slot(vec![(LocalVar, 0.8), (Register, 0.2)]),
            slot(vec![(c(&[0, 0xFFFFFFFF]), 1.0)]),
            slot(vec![(SC4, 0.8), (c(&[0]), 0.2)]),
            slot(vec![(SC4, 0.8), (c(&[0]), 0.2)]),
            slot(vec![(SC4, 1.0)]),
            slot(vec![(SC4, 1.0)]),
            slot(vec![(c(&[1, 2, 4, 0x10, 0x40]), 1.0)]),
        ],
    );
    add(
        "WideCharToMultiByte",
        vec![
            slot(vec![(c(&[0, 0xFDE9, 0x4E4]), 1.0)]),
            slot(vec![(c(&[0]), 1.0)]),
            slot(vec![(Pointer, 0.5), (LocalVar, 0.5)]),
            slot(vec![(c(&[0xFFFFFFFF]), 0.6), (SC4, 0.4)]),
            slot(vec![(LeaVar, 0.5), (LocalVar, 0.5)]),
            slot(vec![(SC4, 0.7), (c(&[0]), 0.3)]),
            slot(vec![(c(&[0]), 1.0)]),
            slot(vec![(c(&[0]), 0.7), (LeaVar, 0.3)]),
        ],
    );

    p
}

/// The default corpus description at a given master seed.
pub fn default_spec(seed: u64) -> SynthSpec {
    SynthSpec {
        seed,
        binaries: 8,
        calls_per_api: 420,
        calls_per_function: (2, 4),
        junk_rate: 0.35,
        junk_push_rate: 0.15,
        branch_density: 0.3,
        thunk_rate: 0.2,
        tail_jump_rate: 0.08,
        image_base: 0x40_0000,
        image_size: 0x10_0000,
        profiles: default_profiles(),
    }
}
