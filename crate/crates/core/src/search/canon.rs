use std::collections::BTreeMap;

use crate::isa::{Operand, Program, RegDecl, RegId, Width};

fn class_prefix(w: Width) -> &'static str {
    match w {
        Width::Byte => "b",
        Width::Dword => "r",
        Width::Qword => "x",
    }
}

fn registers_in(op: &Operand) -> Vec<RegId> {
    match op {
        Operand::Reg(r) => vec![*r],
        Operand::Mem(m) => m.base.into_iter().chain(m.index).collect(),
        _ => Vec::new(),
    }
}

/// Renames registers other than `p` in order of first use, one counter per
/// width: dword `r0..`, qword `x0..`, byte `b0..`. Unused registers are
/// dropped. Labels and data are kept.
pub fn canonicalize(program: &Program) -> Program {
    let mut map: BTreeMap<RegId, RegId> = BTreeMap::new();
    map.insert(RegId::BUFFER, RegId::BUFFER);
    let mut registers = vec![program.registers[0].clone()];
    let mut counters: BTreeMap<&str, usize> = BTreeMap::new();
    for instr in &program.instructions {
        for op in &instr.operands {
            for r in registers_in(op) {
                if map.contains_key(&r) {
                    continue;
                }
                let width = program.register(r).width;
                let prefix = class_prefix(width);
                let n = counters.entry(prefix).or_default();
                map.insert(r, RegId(registers.len() as u8));
                registers.push(RegDecl {
                    name: format!("{prefix}{n}"),
                    width,
                });
                *n += 1;
            }
        }
    }
    let rename = |r: &mut RegId| *r = map[r];
    let mut out = program.clone();
    out.registers = registers;
    for instr in &mut out.instructions {
        for op in &mut instr.operands {
            match op {
                Operand::Reg(r) => rename(r),
                Operand::Mem(m) => {
                    m.base.iter_mut().for_each(rename);
                    m.index.iter_mut().for_each(rename);
                }
                _ => {}
            }
        }
    }
    out
}
