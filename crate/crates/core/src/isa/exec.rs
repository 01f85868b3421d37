use serde::Serialize;
use thiserror::Error;

use super::{Instruction, MemRef, Opcode, Operand, Program, RegId, Width, BUFFER_BASE, DATA_BASE};

pub const MAX_REGISTERS: usize = 16;
pub const DEFAULT_FUEL: u64 = 1024;
const MAX_BUFFER: usize = 12;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize)]
pub struct Flags {
    pub cf: bool,
    pub zf: bool,
    pub sf: bool,
    pub of: bool,
}

impl Flags {
    /// Signed greater: ZF = 0 and SF = OF.
    pub fn greater(self) -> bool {
        !self.zf && self.sf == self.of
    }

    /// Signed less-or-equal: ZF = 1 or SF != OF.
    pub fn less_equal(self) -> bool {
        self.zf || self.sf != self.of
    }

    fn from_result(res: u64, width: Width, cf: bool, of: bool) -> Flags {
        Flags {
            cf,
            zf: res == 0,
            sf: res & width.sign_bit() != 0,
            of,
        }
    }
}

/// `dst - src - borrow` at `width`, with x86 flag results.
pub(crate) fn sub_with_borrow(dst: u64, src: u64, borrow: bool, width: Width) -> (u64, Flags) {
    let mask = width.mask();
    let (dst, src) = (dst & mask, src & mask);
    let b = borrow as u64;
    let res = dst.wrapping_sub(src).wrapping_sub(b) & mask;
    let cf = (dst as u128) < src as u128 + b as u128;
    let exact = width.sign_extend(dst) as i128 - width.sign_extend(src) as i128 - b as i128;
    let of = exact != width.sign_extend(res) as i128;
    (res, Flags::from_result(res, width, cf, of))
}

/// `dst + src + carry` at `width`, with x86 flag results.
pub(crate) fn add_with_carry(dst: u64, src: u64, carry: bool, width: Width) -> (u64, Flags) {
    let mask = width.mask();
    let (dst, src) = (dst & mask, src & mask);
    let c = carry as u64;
    let wide = dst as u128 + src as u128 + c as u128;
    let res = (wide as u64) & mask;
    let cf = wide > mask as u128;
    let exact = width.sign_extend(dst) as i128 + width.sign_extend(src) as i128 + c as i128;
    let of = exact != width.sign_extend(res) as i128;
    (res, Flags::from_result(res, width, cf, of))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error, Serialize)]
pub enum ExecError {
    #[error("instruction {ip}: {size}-byte {} at {address:#x} is outside every segment", if *.write { "write" } else { "read" })]
    MemoryFault {
        ip: usize,
        address: u64,
        size: usize,
        write: bool,
    },
    #[error("instruction {ip}: write to read-only data at {address:#x}")]
    ReadOnlyWrite { ip: usize, address: u64 },
    #[error("instruction pointer {ip} is past the end of the program")]
    IpOutOfRange { ip: usize },
}

/// Register file, flags and buffer of one execution. The data segment is
/// read-only and is read straight from the [`Program`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct MachineState {
    pub regs: [u64; MAX_REGISTERS],
    pub flags: Flags,
    buffer: [u8; MAX_BUFFER],
    buffer_len: u8,
    pub ip: usize,
    pub executed: u64,
}

impl MachineState {
    /// Fresh state for `program` with `input` stored little-endian in the
    /// buffer. Registers start at zero except `p`, which points at the buffer.
    ///
    /// Panics if `input` does not match the program's target arity.
    pub fn new(program: &Program, input: &[i32]) -> MachineState {
        assert_eq!(
            input.len(),
            program.target.arity(),
            "input arity does not match {}",
            program.target
        );
        let mut state = MachineState {
            regs: [0; MAX_REGISTERS],
            flags: Flags::default(),
            buffer: [0; MAX_BUFFER],
            buffer_len: (input.len() * 4) as u8,
            ip: 0,
            executed: 0,
        };
        state.regs[RegId::BUFFER.index()] = BUFFER_BASE;
        for (k, v) in input.iter().enumerate() {
            state.buffer[k * 4..k * 4 + 4].copy_from_slice(&v.to_le_bytes());
        }
        state
    }

    pub fn buffer(&self) -> &[u8] {
        &self.buffer[..self.buffer_len as usize]
    }

    /// Buffer contents as 32-bit integers.
    pub fn values(&self) -> Vec<i32> {
        self.buffer()
            .chunks_exact(4)
            .map(|c| i32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect()
    }

    pub fn value(&self, k: usize) -> i32 {
        let c = &self.buffer[k * 4..k * 4 + 4];
        i32::from_le_bytes([c[0], c[1], c[2], c[3]])
    }

    pub fn reg(&self, id: RegId) -> u64 {
        self.regs[id.index()]
    }

    fn address(&self, m: &MemRef) -> u64 {
        let mut ea = m.disp as u64;
        if let Some(sym) = &m.symbol {
            ea = ea.wrapping_add(DATA_BASE).wrapping_add(sym.offset);
        }
        if let Some(b) = m.base {
            ea = ea.wrapping_add(self.reg(b));
        }
        if let Some(i) = m.index {
            ea = ea.wrapping_add(self.reg(i).wrapping_mul(m.scale as u64));
        }
        ea
    }

    fn load(&self, program: &Program, address: u64, size: usize) -> Result<u64, ExecError> {
        let bytes = if let Some(off) = offset_in(address, size, BUFFER_BASE, self.buffer_len as usize) {
            &self.buffer[off..off + size]
        } else if let Some(off) = offset_in(address, size, DATA_BASE, program.data.len()) {
            &program.data[off..off + size]
        } else {
            return Err(ExecError::MemoryFault {
                ip: self.ip,
                address,
                size,
                write: false,
            });
        };
        let mut raw = [0u8; 8];
        raw[..size].copy_from_slice(bytes);
        Ok(u64::from_le_bytes(raw))
    }

    fn store(&mut self, program: &Program, address: u64, size: usize, value: u64) -> Result<(), ExecError> {
        if let Some(off) = offset_in(address, size, BUFFER_BASE, self.buffer_len as usize) {
            self.buffer[off..off + size].copy_from_slice(&value.to_le_bytes()[..size]);
            Ok(())
        } else if offset_in(address, size, DATA_BASE, program.data.len()).is_some() {
            Err(ExecError::ReadOnlyWrite { ip: self.ip, address })
        } else {
            Err(ExecError::MemoryFault {
                ip: self.ip,
                address,
                size,
                write: true,
            })
        }
    }

    fn read(&self, program: &Program, op: &Operand, width: Width) -> Result<u64, ExecError> {
        Ok(match op {
            Operand::Reg(r) => self.reg(*r) & width.mask(),
            Operand::Imm(v) => *v as u64 & width.mask(),
            Operand::Mem(m) => self.load(program, self.address(m), width.bytes())?,
            Operand::Label { .. } => unreachable!("label operands are only used by branches"),
        })
    }

    fn write(&mut self, program: &Program, op: &Operand, width: Width, value: u64) -> Result<(), ExecError> {
        match op {
            Operand::Reg(r) => {
                let slot = &mut self.regs[r.index()];
                *slot = match width {
                    // 32-bit writes zero the upper half.
                    Width::Qword | Width::Dword => value & width.mask(),
                    Width::Byte => (*slot & !0xFF) | (value & 0xFF),
                };
                Ok(())
            }
            Operand::Mem(m) => {
                let address = self.address(m);
                self.store(program, address, width.bytes(), value)
            }
            Operand::Imm(_) | Operand::Label { .. } => unreachable!("rejected by the parser"),
        }
    }

    /// Retires the instruction at `ip`.
    pub fn step(&mut self, program: &Program) -> Result<(), ExecError> {
        let instr = program
            .instructions
            .get(self.ip)
            .ok_or(ExecError::IpOutOfRange { ip: self.ip })?;
        let next = self.execute(program, instr)?;
        self.ip = next;
        self.executed += 1;
        Ok(())
    }

    /// Executes `instr` as if it sat at `ip` and returns the next `ip`.
    /// Does not touch `executed`.
    pub(crate) fn execute(&mut self, program: &Program, instr: &Instruction) -> Result<usize, ExecError> {
        let w = instr.width;
        let ops = &instr.operands;
        match instr.opcode {
            Opcode::Mov => {
                let v = self.read(program, &ops[0], w)?;
                self.write(program, &ops[1], w, v)?;
            }
            Opcode::MovsbSx => {
                let byte = self.read(program, &ops[0], Width::Byte)?;
                let v = Width::Byte.sign_extend(byte) as u64;
                self.write(program, &ops[1], w, v)?;
            }
            Opcode::Cmp => {
                let src = self.read(program, &ops[0], w)?;
                let dst = self.read(program, &ops[1], w)?;
                self.flags = sub_with_borrow(dst, src, false, w).1;
            }
            Opcode::Cmovg => {
                // A 32-bit cmov writes (and so zero-extends) its destination
                // whether or not the move happens.
                let take = self.flags.greater();
                let v = if take {
                    self.read(program, &ops[0], w)?
                } else {
                    self.read(program, &ops[1], w)?
                };
                self.write(program, &ops[1], w, v)?;
            }
            Opcode::Sbb => {
                let src = self.read(program, &ops[0], w)?;
                let dst = self.read(program, &ops[1], w)?;
                let (res, flags) = sub_with_borrow(dst, src, self.flags.cf, w);
                self.write(program, &ops[1], w, res)?;
                self.flags = flags;
            }
            Opcode::Adc => {
                let src = self.read(program, &ops[0], w)?;
                let dst = self.read(program, &ops[1], w)?;
                let (res, flags) = add_with_carry(dst, src, self.flags.cf, w);
                self.write(program, &ops[1], w, res)?;
                self.flags = flags;
            }
            Opcode::Jle => {
                if self.flags.less_equal() {
                    return Ok(instr.branch_target().expect("resolved label"));
                }
            }
            Opcode::Jmp => return Ok(instr.branch_target().expect("resolved label")),
        }
        Ok(self.ip + 1)
    }
}

fn offset_in(address: u64, size: usize, base: u64, len: usize) -> Option<usize> {
    let off = address.checked_sub(base)?;
    (off.checked_add(size as u64)? <= len as u64).then_some(off as usize)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Halt {
    FellOffEnd,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RunOutcome {
    pub output: Vec<i32>,
    pub executed: u64,
    pub halt: Halt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error, Serialize)]
pub enum RunError {
    #[error("fuel exhausted after {executed} instructions (possible non-termination)")]
    FuelExhausted { executed: u64 },
    #[error(transparent)]
    Fault(#[from] ExecError),
}

/// Runs `program` on `input` until the instruction pointer falls off the
/// end or `fuel` instructions have retired.
pub fn run(program: &Program, input: &[i32], fuel: u64) -> Result<RunOutcome, RunError> {
    run_with(program, input, fuel, |_| {})
}

/// Like [`run`], also returning how many times each instruction retired.
pub fn run_profiled(program: &Program, input: &[i32], fuel: u64) -> Result<(RunOutcome, Vec<u64>), RunError> {
    let mut hits = vec![0u64; program.len()];
    let out = run_with(program, input, fuel, |ip| hits[ip] += 1)?;
    Ok((out, hits))
}

fn run_with(
    program: &Program,
    input: &[i32],
    fuel: u64,
    mut on_retire: impl FnMut(usize),
) -> Result<RunOutcome, RunError> {
    let mut state = MachineState::new(program, input);
    while state.ip < program.len() {
        if state.executed >= fuel {
            return Err(RunError::FuelExhausted {
                executed: state.executed,
            });
        }
        let ip = state.ip;
        state.step(program)?;
        on_retire(ip);
    }
    Ok(RunOutcome {
        output: state.values(),
        executed: state.executed,
        halt: Halt::FellOffEnd,
    })
}
