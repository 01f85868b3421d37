//! AT&T-subset parser and renderer.
//!
//! Accepted line forms:
//!
//! ```text
//! # target sort3                 header: buffer size
//! # reg a dword                  header: register width
//! # data dest = 1,2,9,...        header: read-only byte table
//! loop_start%=:                  label (`%=` suffix is dropped)
//!     cmp 8(%[p]), %[b]          instruction
//! "mov (%[p]), %[a]  \n\t"       inline-asm string form
//! ```
//!
//! Anything after `//` or `#` on an instruction line is a comment.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

use super::{
    Instruction, MemRef, Opcode, Operand, Program, RegDecl, RegId, Symbol, Target, Width,
    BUFFER_REGISTER, MAX_REGISTERS,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {kind}")]
pub struct ParseError {
    pub line: usize,
    pub kind: ParseErrorKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseErrorKind {
    #[error("unknown mnemonic `{0}`")]
    UnknownMnemonic(String),
    #[error("malformed operand `{0}`")]
    MalformedOperand(String),
    #[error("undefined label `{0}`")]
    UndefinedLabel(String),
    #[error("duplicate label `{0}`")]
    DuplicateLabel(String),
    #[error("`{mnemonic}` expects {expected} operand(s), found {found}")]
    OperandCount {
        mnemonic: String,
        expected: usize,
        found: usize,
    },
    #[error("invalid operand combination for `{0}`")]
    InvalidOperands(String),
    #[error("operand widths disagree in `{0}`")]
    WidthMismatch(String),
    #[error("cannot infer operation width of `{0}`; add a size suffix")]
    AmbiguousWidth(String),
    #[error("unknown data symbol `{0}`")]
    UnknownSymbol(String),
    #[error("malformed header directive `{0}`")]
    BadDirective(String),
    #[error("too many registers (limit {MAX_REGISTERS})")]
    TooManyRegisters,
}

fn err(line: usize, kind: ParseErrorKind) -> ParseError {
    ParseError { line, kind }
}

enum Item {
    Label(String),
    Instruction(String),
}

/// Parses program text. The same text always yields the same program.
pub fn parse_program(text: &str) -> Result<Program, ParseError> {
    let mut program = Program::empty(Target::Sort3);
    let mut items: Vec<(usize, Item)> = Vec::new();

    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix('#') {
            directive(&mut program, rest.trim(), line)?;
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix('"') {
            let end = rest
                .find('"')
                .ok_or_else(|| err(line, ParseErrorKind::MalformedOperand(trimmed.into())))?;
            let code = rest[..end].replace("\\n", " ").replace("\\t", " ");
            push_code(&mut items, line, strip_comment(code.trim()))?;
            continue;
        }
        push_code(&mut items, line, strip_comment(trimmed))?;
    }

    let mut pending_jumps: Vec<(usize, usize)> = Vec::new();
    for (line, item) in items {
        match item {
            Item::Label(name) => {
                if program.labels.contains_key(&name) {
                    return Err(err(line, ParseErrorKind::DuplicateLabel(name)));
                }
                program.labels.insert(name, program.instructions.len());
            }
            Item::Instruction(code) => {
                let instr = parse_instruction(&mut program, &code, line)?;
                if instr.opcode.is_branch() {
                    pending_jumps.push((program.instructions.len(), line));
                }
                program.instructions.push(instr);
            }
        }
    }

    for (idx, line) in pending_jumps {
        if let Some(Operand::Label { name, target }) = program.instructions[idx].operands.first_mut()
        {
            *target = *program
                .labels
                .get(name.as_str())
                .ok_or_else(|| err(line, ParseErrorKind::UndefinedLabel(name.clone())))?;
        }
    }
    Ok(program)
}

fn push_code(items: &mut Vec<(usize, Item)>, line: usize, code: &str) -> Result<(), ParseError> {
    let code = code.trim();
    if code.is_empty() {
        return Ok(());
    }
    if let Some(label) = code.strip_suffix(':') {
        let name = normalize_label(label.trim());
        if !is_ident(&name) {
            return Err(err(line, ParseErrorKind::MalformedOperand(code.into())));
        }
        items.push((line, Item::Label(name)));
    } else {
        items.push((line, Item::Instruction(code.to_string())));
    }
    Ok(())
}

fn strip_comment(s: &str) -> &str {
    let cut = [s.find("//"), s.find('#')].into_iter().flatten().min();
    match cut {
        Some(i) => &s[..i],
        None => s,
    }
}

fn normalize_label(s: &str) -> String {
    s.strip_suffix("%=").unwrap_or(s).to_string()
}

fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.')
}

fn directive(program: &mut Program, body: &str, line: usize) -> Result<(), ParseError> {
    let bad = || err(line, ParseErrorKind::BadDirective(body.to_string()));
    let mut words = body.split_whitespace();
    match words.next() {
        Some("target") => {
            let t = words.next().ok_or_else(bad)?;
            program.target = t.parse().map_err(|_| bad())?;
            if words.next().is_some() {
                return Err(bad());
            }
        }
        Some("reg") => {
            let (name, width) = match (words.next(), words.next(), words.next()) {
                (Some(n), Some(w), None) => (n, w),
                _ => return Err(bad()),
            };
            let width = match width {
                "byte" => Width::Byte,
                "dword" => Width::Dword,
                "qword" => Width::Qword,
                _ => return Err(bad()),
            };
            if !is_ident(name) || name == BUFFER_REGISTER || program.register_id(name).is_some() {
                return Err(bad());
            }
            declare(program, name, width, line)?;
        }
        Some("data") => {
            let rest = body["data".len()..].trim();
            let (name, values) = rest.split_once('=').ok_or_else(bad)?;
            let name = name.trim();
            if !is_ident(name) || program.data_symbols.contains_key(name) {
                return Err(bad());
            }
            let offset = program.data.len() as u64;
            for v in values.split(',') {
                let v = parse_int(v.trim()).ok_or_else(bad)?;
                if !(-128..=255).contains(&v) {
                    return Err(bad());
                }
                program.data.push(v as u8);
            }
            program.data_symbols.insert(name.to_string(), offset);
        }
        // Plain comment.
        _ => {}
    }
    Ok(())
}

fn declare(program: &mut Program, name: &str, width: Width, line: usize) -> Result<RegId, ParseError> {
    if program.registers.len() >= MAX_REGISTERS {
        return Err(err(line, ParseErrorKind::TooManyRegisters));
    }
    program.registers.push(RegDecl {
        name: name.to_string(),
        width,
    });
    Ok(RegId((program.registers.len() - 1) as u8))
}

fn parse_int(s: &str) -> Option<i64> {
    let (neg, digits) = match s.strip_prefix('-') {
        Some(d) => (true, d),
        None => (false, s.strip_prefix('+').unwrap_or(s)),
    };
    let v = if let Some(hex) = digits.strip_prefix("0x").or_else(|| digits.strip_prefix("0X")) {
        i128::from_str_radix(hex, 16).ok()?
    } else {
        if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        digits.parse::<i128>().ok()?
    };
    let v = if neg { -v } else { v };
    // Accept the full u64 range so hex immediates like 0xFFFFFFFFFFFFFFFF work.
    if v < i64::MIN as i128 || v > u64::MAX as i128 {
        return None;
    }
    Some(v as i64)
}

fn split_operands(s: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut depth = 0usize;
    let mut start = 0;
    for (i, c) in s.char_indices() {
        match c {
            '(' => depth += 1,
            ')' => depth = depth.saturating_sub(1),
            ',' if depth == 0 => {
                out.push(s[start..i].trim());
                start = i + 1;
            }
            _ => {}
        }
    }
    let last = s[start..].trim();
    if !last.is_empty() || !out.is_empty() {
        out.push(last);
    }
    out
}

fn parse_register(program: &mut Program, s: &str, line: usize) -> Result<RegId, ParseError> {
    let malformed = || err(line, ParseErrorKind::MalformedOperand(s.to_string()));
    let body = s.strip_prefix('%').ok_or_else(malformed)?;
    let name = match body.strip_prefix('[') {
        Some(inner) => inner.strip_suffix(']').ok_or_else(malformed)?,
        None => body,
    };
    if !is_ident(name) {
        return Err(malformed());
    }
    match program.register_id(name) {
        Some(id) => Ok(id),
        None => declare(program, name, Width::Dword, line),
    }
}

fn parse_operand(program: &mut Program, s: &str, line: usize) -> Result<Operand, ParseError> {
    let malformed = || err(line, ParseErrorKind::MalformedOperand(s.to_string()));
    if s.starts_with('%') {
        return Ok(Operand::Reg(parse_register(program, s, line)?));
    }
    if let Some(imm) = s.strip_prefix('$') {
        return parse_int(imm.trim()).map(Operand::Imm).ok_or_else(malformed);
    }
    if s.is_empty() {
        return Err(malformed());
    }

    let (prefix, inner) = match s.find('(') {
        Some(i) => {
            let inner = s[i + 1..].strip_suffix(')').ok_or_else(malformed)?;
            (s[..i].trim(), Some(inner))
        }
        None => (s, None),
    };

    let mut symbol = None;
    let mut disp = 0i64;
    if !prefix.is_empty() {
        let first = prefix.chars().next().unwrap();
        if first.is_ascii_alphabetic() || first == '_' {
            let end = prefix.find(['+', '-']).unwrap_or(prefix.len());
            let name = prefix[..end].trim();
            if !is_ident(name) {
                return Err(malformed());
            }
            let offset = *program
                .data_symbols
                .get(name)
                .ok_or_else(|| err(line, ParseErrorKind::UnknownSymbol(name.to_string())))?;
            symbol = Some(Symbol {
                name: name.to_string(),
                offset,
            });
            let rest = prefix[end..].replace(' ', "");
            if !rest.is_empty() {
                disp = parse_int(&rest).ok_or_else(malformed)?;
            }
        } else {
            disp = parse_int(&prefix.replace(' ', "")).ok_or_else(malformed)?;
        }
    }

    let mut base = None;
    let mut index = None;
    let mut scale = 1u8;
    if let Some(inner) = inner {
        let parts: Vec<&str> = inner.split(',').map(str::trim).collect();
        if parts.len() > 3 {
            return Err(malformed());
        }
        if !parts[0].is_empty() {
            base = Some(parse_register(program, parts[0], line)?);
        }
        if let Some(ix) = parts.get(1) {
            index = Some(parse_register(program, ix, line)?);
        }
        if let Some(sc) = parts.get(2) {
            scale = match parse_int(sc) {
                Some(v @ (1 | 2 | 4 | 8)) => v as u8,
                _ => return Err(malformed()),
            };
        }
        if base.is_none() && index.is_none() {
            return Err(malformed());
        }
    } else if symbol.is_none() && prefix.is_empty() {
        return Err(malformed());
    }

    Ok(Operand::Mem(MemRef {
        symbol,
        disp,
        base,
        index,
        scale,
    }))
}

fn split_mnemonic(m: &str) -> Option<(Opcode, Option<Width>)> {
    let lower = m.to_ascii_lowercase();
    let exact = |s: &str| Opcode::ALL.into_iter().find(|op| op.mnemonic() == s);
    if let Some(op) = exact(&lower) {
        return Some((op, None));
    }
    if lower == "movsbq" || lower == "movsbl" {
        return Some((Opcode::MovsbSx, Width::from_suffix(lower.chars().last()?)));
    }
    let (stem, suffix) = lower.split_at(lower.len().checked_sub(1)?);
    let op = exact(stem)?;
    if op.is_branch() || op == Opcode::MovsbSx {
        return None;
    }
    Some((op, Some(Width::from_suffix(suffix.chars().next()?)?)))
}

fn parse_instruction(program: &mut Program, code: &str, line: usize) -> Result<Instruction, ParseError> {
    let (mnemonic, rest) = match code.find(char::is_whitespace) {
        Some(i) => (&code[..i], code[i..].trim()),
        None => (code, ""),
    };
    let (opcode, suffix) = split_mnemonic(mnemonic)
        .ok_or_else(|| err(line, ParseErrorKind::UnknownMnemonic(mnemonic.to_string())))?;
    let texts = split_operands(rest);
    let expected = if opcode.is_branch() { 1 } else { 2 };
    if texts.len() != expected {
        return Err(err(
            line,
            ParseErrorKind::OperandCount {
                mnemonic: mnemonic.to_string(),
                expected,
                found: texts.len(),
            },
        ));
    }
    let invalid = || err(line, ParseErrorKind::InvalidOperands(code.to_string()));

    if opcode.is_branch() {
        let name = normalize_label(texts[0]);
        if !is_ident(&name) {
            return Err(err(line, ParseErrorKind::MalformedOperand(texts[0].to_string())));
        }
        return Ok(Instruction {
            opcode,
            operands: vec![Operand::Label { name, target: 0 }],
            width: Width::Qword,
        });
    }

    let src = parse_operand(program, texts[0], line)?;
    let dst = parse_operand(program, texts[1], line)?;
    use Operand::*;
    let ok = match opcode {
        Opcode::Mov => !matches!(dst, Imm(_)) && !matches!((&src, &dst), (Mem(_), Mem(_))),
        Opcode::MovsbSx => matches!(src, Mem(_) | Reg(_)) && matches!(dst, Reg(_)),
        Opcode::Cmp | Opcode::Sbb | Opcode::Adc => {
            !matches!(dst, Imm(_)) && !matches!((&src, &dst), (Mem(_), Mem(_)))
        }
        Opcode::Cmovg => matches!(src, Mem(_) | Reg(_)) && matches!(dst, Reg(_)),
        Opcode::Jle | Opcode::Jmp => unreachable!(),
    };
    if !ok {
        return Err(invalid());
    }

    let width = if opcode == Opcode::MovsbSx {
        let Reg(d) = dst else { unreachable!() };
        let w = program.register(d).width;
        if suffix.is_some_and(|s| s != w) {
            return Err(err(line, ParseErrorKind::WidthMismatch(code.to_string())));
        }
        w
    } else {
        let mut inferred: Option<Width> = None;
        for op in [&src, &dst] {
            if let Reg(r) = op {
                let w = program.register(*r).width;
                if inferred.is_some_and(|x| x != w) {
                    return Err(err(line, ParseErrorKind::WidthMismatch(code.to_string())));
                }
                inferred = Some(w);
            }
        }
        match (suffix, inferred) {
            (Some(s), Some(i)) if s != i => {
                return Err(err(line, ParseErrorKind::WidthMismatch(code.to_string())))
            }
            (Some(s), _) => s,
            (None, Some(i)) => i,
            (None, None) => return Err(err(line, ParseErrorKind::AmbiguousWidth(code.to_string()))),
        }
    };

    Ok(Instruction::new(opcode, src, dst, width))
}

fn render_operand(program: &Program, op: &Operand, out: &mut String) {
    let reg = |id: RegId| format!("%[{}]", program.register(id).name);
    match op {
        Operand::Reg(r) => out.push_str(&reg(*r)),
        Operand::Imm(v) => {
            let _ = write!(out, "${v}");
        }
        Operand::Label { name, .. } => out.push_str(name),
        Operand::Mem(m) => {
            if let Some(sym) = &m.symbol {
                out.push_str(&sym.name);
                if m.disp != 0 {
                    let _ = write!(out, "{:+}", m.disp);
                }
            } else if m.disp != 0 || (m.base.is_none() && m.index.is_none()) {
                let _ = write!(out, "{}", m.disp);
            }
            if m.base.is_some() || m.index.is_some() {
                out.push('(');
                if let Some(b) = m.base {
                    out.push_str(&reg(b));
                }
                if let Some(i) = m.index {
                    let _ = write!(out, ",{},{}", reg(i), m.scale);
                }
                out.push(')');
            }
        }
    }
}

pub(super) fn render(program: &Program) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# target {}", program.target);
    for decl in program.registers.iter().skip(1) {
        let _ = writeln!(out, "# reg {} {}", decl.name, decl.width);
    }
    let mut symbols: Vec<(&String, u64)> = program.data_symbols.iter().map(|(k, v)| (k, *v)).collect();
    symbols.sort_by_key(|&(name, off)| (off, name.clone()));
    for (k, &(name, off)) in symbols.iter().enumerate() {
        let end = symbols
            .get(k + 1)
            .map(|&(_, o)| o as usize)
            .unwrap_or(program.data.len());
        let bytes: Vec<String> = program.data[off as usize..end]
            .iter()
            .map(|&b| (b as i8).to_string())
            .collect();
        let _ = writeln!(out, "# data {name} = {}", bytes.join(","));
    }

    let mut by_index: BTreeMap<usize, Vec<&String>> = BTreeMap::new();
    for (name, &idx) in &program.labels {
        by_index.entry(idx).or_default().push(name);
    }
    for idx in 0..=program.instructions.len() {
        for name in by_index.get(&idx).into_iter().flatten() {
            let _ = writeln!(out, "{name}:");
        }
        let Some(instr) = program.instructions.get(idx) else { break };
        out.push_str("    ");
        out.push_str(instr.opcode.mnemonic());
        if !instr.opcode.is_branch() {
            out.push(instr.width.suffix());
        }
        for (k, op) in instr.operands.iter().enumerate() {
            out.push_str(if k == 0 { " " } else { ", " });
            render_operand(program, op, &mut out);
        }
        out.push('\n');
    }
    out
}
