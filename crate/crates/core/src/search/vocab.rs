//! Instruction templates the searcher enumerates.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::isa::{
    Instruction, MemRef, Opcode, Operand, Program, RegDecl, RegId, Symbol, Target, Width, BUFFER_REGISTER,
};
use crate::kernels::DEST;

/// An opcode together with an operand shape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    /// `mov d(%p), %r`
    MovMemReg,
    /// `mov %r, d(%p)`
    MovRegMem,
    /// `mov %r, %s`
    MovRegReg,
    /// `mov $k, %r`
    MovImmReg,
    /// `mov %r, (%p,%x,4)`
    MovRegIndexed,
    /// `movsb dest+K(%x), %y`
    MovsbTable,
    /// `cmp %r, %s`
    CmpRegReg,
    /// `cmp d(%p), %r`
    CmpMemReg,
    /// `cmovg %r, %s`
    CmovgRegReg,
    /// `cmovg d(%p), %r`
    CmovgMemReg,
    /// `sbb %x, %y`
    SbbRegReg,
    /// `adc %x, %y`
    AdcRegReg,
}

impl Shape {
    pub const ALL: [Shape; 12] = [
        Shape::MovMemReg,
        Shape::MovRegMem,
        Shape::MovRegReg,
        Shape::MovImmReg,
        Shape::MovRegIndexed,
        Shape::MovsbTable,
        Shape::CmpRegReg,
        Shape::CmpMemReg,
        Shape::CmovgRegReg,
        Shape::CmovgMemReg,
        Shape::SbbRegReg,
        Shape::AdcRegReg,
    ];

    /// Loads, stores, register copies, compares and conditional moves.
    pub const DEFAULT: [Shape; 5] = [
        Shape::MovMemReg,
        Shape::MovRegMem,
        Shape::MovRegReg,
        Shape::CmpRegReg,
        Shape::CmovgRegReg,
    ];

    pub const fn name(self) -> &'static str {
        match self {
            Shape::MovMemReg => "mov-m-r",
            Shape::MovRegMem => "mov-r-m",
            Shape::MovRegReg => "mov-r-r",
            Shape::MovImmReg => "mov-i-r",
            Shape::MovRegIndexed => "mov-r-x",
            Shape::MovsbTable => "movsb-t-r",
            Shape::CmpRegReg => "cmp-r-r",
            Shape::CmpMemReg => "cmp-m-r",
            Shape::CmovgRegReg => "cmovg-r-r",
            Shape::CmovgMemReg => "cmovg-m-r",
            Shape::SbbRegReg => "sbb-r-r",
            Shape::AdcRegReg => "adc-r-r",
        }
    }

    /// Whether the shape works on the qword index registers.
    pub const fn uses_index_registers(self) -> bool {
        matches!(
            self,
            Shape::MovRegIndexed | Shape::MovsbTable | Shape::SbbRegReg | Shape::AdcRegReg
        )
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Shape {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Shape::ALL
            .into_iter()
            .find(|shape| shape.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = Shape::ALL.iter().map(|s| s.name()).collect();
                format!("unknown shape `{s}` (one of {})", names.join(", "))
            })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub(crate) enum RegClass {
    Data,
    Index,
}

// Resource bits for liveness: registers by id, then flags, then buffer slots.
pub(crate) const FLAGS_BIT: u64 = 1 << 16;
pub(crate) const fn slot_bit(slot: usize) -> u64 {
    1 << (17 + slot)
}
pub(crate) const ALL_SLOTS: u64 = 0b111 << 17;
pub(crate) const fn reg_bit(r: RegId) -> u64 {
    1 << r.0
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub(crate) struct Effects {
    /// Resources possibly written.
    pub defs: u64,
    /// Resources overwritten regardless of their old value.
    pub kills: u64,
    pub uses: u64,
}

#[derive(Clone, Debug)]
pub(crate) struct Template {
    pub instr: Instruction,
    /// Registers in operand order, for first-use canonical ordering.
    pub regs: Vec<(RegClass, u8)>,
    pub effects: Effects,
}

/// Register table and template list for one search.
#[derive(Clone, Debug)]
pub(crate) struct Palette {
    pub data_regs: usize,
    pub index_regs: usize,
    /// Program carrying the register table and data segment.
    pub scratch: Program,
    pub templates: Vec<Template>,
}

impl Palette {
    pub fn data_reg(&self, k: usize) -> RegId {
        RegId(1 + k as u8)
    }

    pub fn index_reg(&self, k: usize) -> RegId {
        RegId((1 + self.data_regs + k) as u8)
    }

    fn class_of(&self, r: RegId) -> Option<(RegClass, u8)> {
        let i = r.index();
        if i == 0 {
            None
        } else if i <= self.data_regs {
            Some((RegClass::Data, (i - 1) as u8))
        } else {
            Some((RegClass::Index, (i - 1 - self.data_regs) as u8))
        }
    }

    pub fn new(target: Target, shapes: &[Shape], data_regs: usize, index_regs: usize, immediates: &[i64]) -> Palette {
        let mut scratch = Program::empty(target);
        scratch.registers = vec![RegDecl {
            name: BUFFER_REGISTER.into(),
            width: Width::Qword,
        }];
        for k in 0..data_regs {
            scratch.registers.push(RegDecl {
                name: format!("r{k}"),
                width: Width::Dword,
            });
        }
        for k in 0..index_regs {
            scratch.registers.push(RegDecl {
                name: format!("x{k}"),
                width: Width::Qword,
            });
        }
        if shapes.contains(&Shape::MovsbTable) {
            scratch.data = DEST.iter().map(|&b| b as u8).collect();
            scratch.data_symbols.insert("dest".into(), 0);
        }
        let mut palette = Palette {
            data_regs,
            index_regs,
            scratch,
            templates: Vec::new(),
        };
        let mut shapes = shapes.to_vec();
        shapes.sort();
        shapes.dedup();
        for shape in shapes {
            palette.push_shape(target, shape, immediates);
        }
        palette
    }

    fn push_shape(&mut self, target: Target, shape: Shape, immediates: &[i64]) {
        let data: Vec<RegId> = (0..self.data_regs).map(|k| self.data_reg(k)).collect();
        let index: Vec<RegId> = (0..self.index_regs).map(|k| self.index_reg(k)).collect();
        let slots: Vec<i64> = (0..target.arity() as i64).map(|k| 4 * k).collect();
        let reg = Operand::Reg;
        let mem = |d: i64| Operand::Mem(MemRef::buffer(d));
        let pairs = |v: &[RegId], distinct: bool| -> Vec<(RegId, RegId)> {
            let mut out = Vec::new();
            for &a in v {
                for &b in v {
                    if !distinct || a != b {
                        out.push((a, b));
                    }
                }
            }
            out
        };
        let dw = Width::Dword;
        let qw = Width::Qword;
        let mut out: Vec<Instruction> = Vec::new();
        match shape {
            Shape::MovMemReg => {
                for &d in &slots {
                    for &r in &data {
                        out.push(Instruction::new(Opcode::Mov, mem(d), reg(r), dw));
                    }
                }
            }
            Shape::MovRegMem => {
                for &r in &data {
                    for &d in &slots {
                        out.push(Instruction::new(Opcode::Mov, reg(r), mem(d), dw));
                    }
                }
            }
            Shape::MovRegReg => {
                for (a, b) in pairs(&data, true) {
                    out.push(Instruction::new(Opcode::Mov, reg(a), reg(b), dw));
                }
            }
            Shape::MovImmReg => {
                for &k in immediates {
                    for &r in &data {
                        out.push(Instruction::new(Opcode::Mov, Operand::Imm(k), reg(r), dw));
                    }
                }
            }
            Shape::MovRegIndexed => {
                for &r in &data {
                    for &x in &index {
                        let m = MemRef {
                            symbol: None,
                            disp: 0,
                            base: Some(RegId::BUFFER),
                            index: Some(x),
                            scale: 4,
                        };
                        out.push(Instruction::new(Opcode::Mov, reg(r), Operand::Mem(m), dw));
                    }
                }
            }
            Shape::MovsbTable => {
                for block in [4i64, 12, 20] {
                    for (x, y) in pairs(&index, false) {
                        let m = MemRef {
                            symbol: Some(Symbol {
                                name: "dest".into(),
                                offset: 0,
                            }),
                            disp: block,
                            base: Some(x),
                            index: None,
                            scale: 1,
                        };
                        out.push(Instruction::new(Opcode::MovsbSx, Operand::Mem(m), reg(y), qw));
                    }
                }
            }
            Shape::CmpRegReg => {
                for (a, b) in pairs(&data, true) {
                    out.push(Instruction::new(Opcode::Cmp, reg(a), reg(b), dw));
                }
            }
            Shape::CmpMemReg => {
                for &d in &slots {
                    for &r in &data {
                        out.push(Instruction::new(Opcode::Cmp, mem(d), reg(r), dw));
                    }
                }
            }
            Shape::CmovgRegReg => {
                for (a, b) in pairs(&data, true) {
                    out.push(Instruction::new(Opcode::Cmovg, reg(a), reg(b), dw));
                }
            }
            Shape::CmovgMemReg => {
                for &d in &slots {
                    for &r in &data {
                        out.push(Instruction::new(Opcode::Cmovg, mem(d), reg(r), dw));
                    }
                }
            }
            Shape::SbbRegReg => {
                for (a, b) in pairs(&index, false) {
                    out.push(Instruction::new(Opcode::Sbb, reg(a), reg(b), qw));
                }
            }
            Shape::AdcRegReg => {
                for (a, b) in pairs(&index, false) {
                    out.push(Instruction::new(Opcode::Adc, reg(a), reg(b), qw));
                }
            }
        }
        for instr in out {
            let t = self.template(instr);
            self.templates.push(t);
        }
    }

    /// Appends `jle`/`jmp` templates for every target in `0..=len`.
    pub fn push_branches(&mut self, len: usize) {
        for opcode in [Opcode::Jle, Opcode::Jmp] {
            for t in 0..=len {
                let instr = Instruction {
                    opcode,
                    operands: vec![Operand::Label {
                        name: format!("L{t}"),
                        target: t,
                    }],
                    width: Width::Qword,
                };
                let tpl = self.template(instr);
                self.templates.push(tpl);
            }
        }
    }

    fn template(&self, instr: Instruction) -> Template {
        let mut regs = Vec::new();
        for op in &instr.operands {
            let mut note = |r: RegId| {
                if let Some(c) = self.class_of(r) {
                    regs.push(c);
                }
            };
            match op {
                Operand::Reg(r) => note(*r),
                Operand::Mem(m) => {
                    m.base.into_iter().chain(m.index).for_each(&mut note);
                }
                _ => {}
            }
        }
        Template {
            effects: effects(&instr),
            instr,
            regs,
        }
    }
}

fn operand_reads(op: &Operand) -> u64 {
    match op {
        Operand::Reg(r) => reg_bit(*r),
        Operand::Mem(m) => {
            let mut bits = m.base.map_or(0, reg_bit) | m.index.map_or(0, reg_bit);
            if m.symbol.is_none() && m.base == Some(RegId::BUFFER) {
                bits |= match (m.index, m.disp) {
                    (None, d) if (0..12).contains(&d) && d % 4 == 0 => slot_bit(d as usize / 4),
                    _ => ALL_SLOTS,
                };
            }
            bits
        }
        _ => 0,
    }
}

/// (defs, kills) of writing `op`, plus the registers its address reads.
fn operand_writes(op: &Operand) -> (u64, u64, u64) {
    match op {
        Operand::Reg(r) => (reg_bit(*r), reg_bit(*r), 0),
        Operand::Mem(m) => {
            let addr = m.base.map_or(0, reg_bit) | m.index.map_or(0, reg_bit);
            match (m.index, m.disp) {
                (None, d) if m.symbol.is_none() && (0..12).contains(&d) && d % 4 == 0 => {
                    let b = slot_bit(d as usize / 4);
                    (b, b, addr)
                }
                _ => (ALL_SLOTS, 0, addr),
            }
        }
        _ => (0, 0, 0),
    }
}

pub(crate) fn effects(instr: &Instruction) -> Effects {
    let ops = &instr.operands;
    match instr.opcode {
        Opcode::Mov | Opcode::MovsbSx => {
            let (defs, kills, addr) = operand_writes(&ops[1]);
            Effects {
                defs,
                kills,
                uses: operand_reads(&ops[0]) | addr,
            }
        }
        Opcode::Cmp => Effects {
            defs: FLAGS_BIT,
            kills: FLAGS_BIT,
            uses: operand_reads(&ops[0]) | operand_reads(&ops[1]),
        },
        Opcode::Cmovg => Effects {
            defs: operand_writes(&ops[1]).0,
            kills: 0,
            uses: FLAGS_BIT | operand_reads(&ops[0]) | operand_reads(&ops[1]),
        },
        Opcode::Sbb | Opcode::Adc => {
            let (defs, kills, _) = operand_writes(&ops[1]);
            // `sbb %x, %x` yields -CF whatever %x held.
            let uses = if instr.opcode == Opcode::Sbb && ops[0] == ops[1] && matches!(ops[0], Operand::Reg(_)) {
                FLAGS_BIT
            } else {
                FLAGS_BIT | operand_reads(&ops[0]) | operand_reads(&ops[1])
            };
            Effects {
                defs: defs | FLAGS_BIT,
                kills: kills | FLAGS_BIT,
                uses,
            }
        }
        Opcode::Jle => Effects {
            uses: FLAGS_BIT,
            ..Effects::default()
        },
        Opcode::Jmp => Effects::default(),
    }
}

/// Resources holding a value on entry: `p` and the buffer.
pub(crate) const DEFINED_AT_ENTRY: u64 = reg_bit(RegId::BUFFER) | ALL_SLOTS;

/// True if some reachable instruction may read a register or the flags
/// before anything wrote them. Must-defined sets meet by intersection at
/// control-flow joins.
pub(crate) fn reads_undefined(instrs: &[&Instruction]) -> bool {
    let n = instrs.len();
    let effects: Vec<Effects> = instrs.iter().map(|i| effects(i)).collect();
    let mut defined: Vec<Option<u64>> = vec![None; n + 1];
    defined[0] = Some(DEFINED_AT_ENTRY);
    let mut work = vec![0usize];
    while let Some(i) = work.pop() {
        if i >= n {
            continue;
        }
        let out = defined[i].expect("queued nodes are reached") | effects[i].kills;
        let succ: [Option<usize>; 2] = match instrs[i].opcode {
            Opcode::Jmp => [instrs[i].branch_target(), None],
            Opcode::Jle => [instrs[i].branch_target(), Some(i + 1)],
            _ => [Some(i + 1), None],
        };
        for j in succ.into_iter().flatten() {
            let merged = defined[j].map_or(out, |d| d & out);
            if defined[j] != Some(merged) {
                defined[j] = Some(merged);
                work.push(j);
            }
        }
    }
    (0..n).any(|i| defined[i].is_some_and(|d| effects[i].uses & !d != 0))
}

/// True if some instruction in the straight-line `seq` writes only
/// resources that are dead afterwards. When `complete`, only the buffer is
/// live at the end; otherwise everything is.
pub(crate) fn has_dead_code<'a>(seq: impl DoubleEndedIterator<Item = &'a Effects>, complete: bool) -> bool {
    let mut live = if complete { ALL_SLOTS } else { u64::MAX };
    for e in seq.rev() {
        if e.defs & live == 0 {
            return true;
        }
        live = (live & !e.kills) | e.uses;
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_template_counts() {
        let p = Palette::new(Target::Sort2, &Shape::DEFAULT, 3, 0, &[]);
        // 6 loads, 6 stores, 6 copies, 6 compares, 6 cmovs.
        assert_eq!(p.templates.len(), 30);
        let p = Palette::new(Target::Sort3, &Shape::DEFAULT, 4, 0, &[]);
        assert_eq!(p.templates.len(), 12 + 12 + 12 + 12 + 12);
    }

    #[test]
    fn shape_names_roundtrip() {
        for s in Shape::ALL {
            assert_eq!(s.name().parse::<Shape>(), Ok(s));
        }
    }

    #[test]
    fn dead_code_examples() {
        let p = Palette::new(Target::Sort2, &Shape::DEFAULT, 2, 0, &[]);
        let find = |text: &str| {
            p.templates
                .iter()
                .find(|t| {
                    let mut prog = p.scratch.clone();
                    prog.instructions = vec![t.instr.clone()];
                    prog.render().lines().last().unwrap().trim() == text
                })
                .unwrap_or_else(|| panic!("no template {text}"))
                .effects
        };
        let load0 = find("movl (%[p]), %[r0]");
        let load1 = find("movl 4(%[p]), %[r0]");
        let store = find("movl %[r0], (%[p])");
        let cmp = find("cmpl %[r1], %[r0]");
        // Load overwritten before use.
        assert!(has_dead_code([load0, load1].iter(), false));
        assert!(!has_dead_code([load0, store].iter(), true));
        // Compare whose flags nobody reads.
        assert!(has_dead_code([load0, cmp, store].iter(), true));
        assert!(!has_dead_code([load0, cmp].iter(), false));
        // Trailing load is dead in a complete program.
        assert!(has_dead_code([store, load0].iter(), true));
    }
}
