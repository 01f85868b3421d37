//! A tiny x86-64 subset: just enough AT&T syntax to express the sort3
//! listings and the searcher's candidate programs.
//!
//! Programs run against a two-segment flat address space. The buffer being
//! sorted lives at [`BUFFER_BASE`] and is reached through the `p` register;
//! read-only data tables declared in the program header live at
//! [`DATA_BASE`] and are reached through their symbol names.

mod exec;
mod parse;

pub mod assets;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

pub use exec::{
    run, run_profiled, ExecError, Flags, Halt, MachineState, RunError, RunOutcome, DEFAULT_FUEL,
    MAX_REGISTERS,
};
pub use parse::{parse_program, ParseError, ParseErrorKind};

/// Base address of the writable buffer segment.
pub const BUFFER_BASE: u64 = 0x1000;
/// Base address of the read-only data segment.
pub const DATA_BASE: u64 = 0x2000;
/// Name of the register that points at the buffer.
pub const BUFFER_REGISTER: &str = "p";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Width {
    Byte,
    Dword,
    Qword,
}

impl Width {
    pub const fn bits(self) -> u32 {
        match self {
            Width::Byte => 8,
            Width::Dword => 32,
            Width::Qword => 64,
        }
    }

    pub const fn bytes(self) -> usize {
        (self.bits() / 8) as usize
    }

    pub const fn mask(self) -> u64 {
        match self {
            Width::Qword => u64::MAX,
            w => (1u64 << w.bits()) - 1,
        }
    }

    pub const fn sign_bit(self) -> u64 {
        1u64 << (self.bits() - 1)
    }

    /// Interprets the low `bits()` of `v` as a two's-complement number.
    pub const fn sign_extend(self, v: u64) -> i64 {
        let shift = 64 - self.bits();
        ((v << shift) as i64) >> shift
    }

    pub(crate) fn suffix(self) -> char {
        match self {
            Width::Byte => 'b',
            Width::Dword => 'l',
            Width::Qword => 'q',
        }
    }

    pub(crate) fn from_suffix(c: char) -> Option<Width> {
        match c {
            'b' => Some(Width::Byte),
            'l' => Some(Width::Dword),
            'q' => Some(Width::Qword),
            _ => None,
        }
    }
}

impl fmt::Display for Width {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Width::Byte => "byte",
            Width::Dword => "dword",
            Width::Qword => "qword",
        })
    }
}

/// Number of dwords a program sorts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    Sort2,
    Sort3,
}

impl Target {
    pub const fn arity(self) -> usize {
        match self {
            Target::Sort2 => 2,
            Target::Sort3 => 3,
        }
    }

    pub const fn buffer_bytes(self) -> usize {
        self.arity() * 4
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Target::Sort2 => "sort2",
            Target::Sort3 => "sort3",
        })
    }
}

impl std::str::FromStr for Target {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sort2" => Ok(Target::Sort2),
            "sort3" => Ok(Target::Sort3),
            other => Err(format!("unknown target `{other}` (expected sort2 or sort3)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RegId(pub u8);

impl RegId {
    /// The buffer pointer always occupies slot 0.
    pub const BUFFER: RegId = RegId(0);

    pub const fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct RegDecl {
    pub name: String,
    pub width: Width,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Symbol {
    pub name: String,
    /// Byte offset into the data segment.
    pub offset: u64,
}

/// `symbol+disp(base, index, scale)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct MemRef {
    pub symbol: Option<Symbol>,
    pub disp: i64,
    pub base: Option<RegId>,
    pub index: Option<RegId>,
    /// 1 unless `index` is present.
    pub scale: u8,
}

impl MemRef {
    pub fn buffer(disp: i64) -> MemRef {
        MemRef {
            symbol: None,
            disp,
            base: Some(RegId::BUFFER),
            index: None,
            scale: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Operand {
    Reg(RegId),
    Imm(i64),
    Mem(MemRef),
    Label { name: String, target: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Opcode {
    Mov,
    /// Byte load sign-extended into the destination register.
    MovsbSx,
    Cmp,
    Cmovg,
    Jle,
    Jmp,
    Sbb,
    Adc,
}

impl Opcode {
    pub const ALL: [Opcode; 8] = [
        Opcode::Mov,
        Opcode::MovsbSx,
        Opcode::Cmp,
        Opcode::Cmovg,
        Opcode::Jle,
        Opcode::Jmp,
        Opcode::Sbb,
        Opcode::Adc,
    ];

    pub const fn mnemonic(self) -> &'static str {
        match self {
            Opcode::Mov => "mov",
            Opcode::MovsbSx => "movsb",
            Opcode::Cmp => "cmp",
            Opcode::Cmovg => "cmovg",
            Opcode::Jle => "jle",
            Opcode::Jmp => "jmp",
            Opcode::Sbb => "sbb",
            Opcode::Adc => "adc",
        }
    }

    pub const fn is_branch(self) -> bool {
        matches!(self, Opcode::Jle | Opcode::Jmp)
    }
}

/// One instruction. Operands are in AT&T order: source first, destination
/// last. Branches carry a single label operand.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Instruction {
    pub opcode: Opcode,
    pub operands: Vec<Operand>,
    /// Operation width. For `movsb` this is the destination width; the
    /// source is always a byte.
    pub width: Width,
}

impl Instruction {
    pub fn new(opcode: Opcode, src: Operand, dst: Operand, width: Width) -> Instruction {
        Instruction {
            opcode,
            operands: vec![src, dst],
            width,
        }
    }

    pub fn src(&self) -> &Operand {
        &self.operands[0]
    }

    pub fn dst(&self) -> Option<&Operand> {
        self.operands.get(1)
    }

    pub fn branch_target(&self) -> Option<usize> {
        match (self.opcode.is_branch(), self.operands.first()) {
            (true, Some(Operand::Label { target, .. })) => Some(*target),
            _ => None,
        }
    }
}

/// A parsed program: instructions, label positions and the data segment.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Program {
    pub target: Target,
    /// Register table; slot 0 is always the buffer pointer `p`.
    pub registers: Vec<RegDecl>,
    pub instructions: Vec<Instruction>,
    /// Label name to instruction index; `len()` marks the end of the program.
    pub labels: BTreeMap<String, usize>,
    pub data: Vec<u8>,
    pub data_symbols: BTreeMap<String, u64>,
}

impl Program {
    /// An empty sort3 program with only the buffer register declared.
    pub fn empty(target: Target) -> Program {
        Program {
            target,
            registers: vec![RegDecl {
                name: BUFFER_REGISTER.to_string(),
                width: Width::Qword,
            }],
            instructions: Vec::new(),
            labels: BTreeMap::new(),
            data: Vec::new(),
            data_symbols: BTreeMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.instructions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instructions.is_empty()
    }

    pub fn register(&self, id: RegId) -> &RegDecl {
        &self.registers[id.index()]
    }

    pub fn register_id(&self, name: &str) -> Option<RegId> {
        self.registers
            .iter()
            .position(|r| r.name == name)
            .map(|i| RegId(i as u8))
    }

    pub fn instruction_count(&self) -> usize {
        instruction_count(self)
    }

    pub fn is_branchless(&self) -> bool {
        is_branchless(self)
    }

    /// Renders the program back to source text that [`parse_program`]
    /// reads as an identical program.
    pub fn render(&self) -> String {
        parse::render(self)
    }
}

/// Number of instructions; labels are not instructions.
pub fn instruction_count(program: &Program) -> usize {
    program.instructions.len()
}

/// True iff the program has no `jle`/`jmp`. Conditional moves are not branches.
pub fn is_branchless(program: &Program) -> bool {
    !program.instructions.iter().any(|i| i.opcode.is_branch())
}
