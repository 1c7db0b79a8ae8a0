//! Host-to-device Register FIS (20 bytes, five little-endian dwords).
//!
//! ```text
//! dword 0: fis_type | flags    | command  | features 7:0
//! dword 1: lba 7:0  | lba 15:8 | lba 23:16| device
//! dword 2: lba 31:24| lba 39:32| lba 47:40| features 15:8
//! dword 3: count 7:0| count 15:8| icc     | control
//! dword 4: access key (all ones when the host has none)
//! ```

use super::TransportError;
use crate::key::AccessKey;

pub const FIS_TYPE_REG_H2D: u8 = 0x27;
pub const FIS_LEN: usize = 20;
/// C bit: the FIS updates the command register.
pub const FLAG_COMMAND: u8 = 0x80;
/// LBA addressing mode in the device register.
pub const DEVICE_LBA: u8 = 0x40;
pub const MAX_LBA: u64 = (1 << 48) - 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Command {
    Read,
    Write,
    Flush,
    /// DATA SET MANAGEMENT (TRIM).
    Trim,
}

impl Command {
    pub fn opcode(self) -> u8 {
        match self {
            Command::Read => 0x25,
            Command::Write => 0x35,
            Command::Flush => 0xE7,
            Command::Trim => 0x06,
        }
    }

    pub fn from_opcode(op: u8) -> Option<Command> {
        match op {
            0x25 => Some(Command::Read),
            0x35 => Some(Command::Write),
            0xE7 => Some(Command::Flush),
            0x06 => Some(Command::Trim),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Command::Read => "read",
            Command::Write => "write",
            Command::Flush => "flush",
            Command::Trim => "trim",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct RegisterFis {
    pub flags: u8,
    pub command: u8,
    pub features: u16,
    /// 48-bit sector address.
    pub lba: u64,
    pub device: u8,
    pub count: u16,
    pub icc: u8,
    pub control: u8,
    pub key: AccessKey,
}

impl RegisterFis {
    pub fn new(
        command: Command,
        lba: u64,
        count: u32,
        key: AccessKey,
    ) -> Result<Self, TransportError> {
        if lba > MAX_LBA {
            return Err(TransportError::FieldOverflow {
                field: "lba",
                value: lba,
            });
        }
        let count = u16::try_from(count).map_err(|_| TransportError::FieldOverflow {
            field: "sector_count",
            value: u64::from(count),
        })?;
        Ok(RegisterFis {
            flags: FLAG_COMMAND,
            command: command.opcode(),
            features: 0,
            lba,
            device: DEVICE_LBA,
            count,
            icc: 0,
            control: 0,
            key,
        })
    }

    pub fn kind(&self) -> Option<Command> {
        Command::from_opcode(self.command)
    }

    pub fn encode(&self) -> [u8; FIS_LEN] {
        let lba = self.lba.to_le_bytes();
        let [f_lo, f_hi] = self.features.to_le_bytes();
        let [c_lo, c_hi] = self.count.to_le_bytes();
        let words = [
            u32::from_le_bytes([FIS_TYPE_REG_H2D, self.flags, self.command, f_lo]),
            u32::from_le_bytes([lba[0], lba[1], lba[2], self.device]),
            u32::from_le_bytes([lba[3], lba[4], lba[5], f_hi]),
            u32::from_le_bytes([c_lo, c_hi, self.icc, self.control]),
            self.key.value(),
        ];
        let mut out = [0u8; FIS_LEN];
        for (chunk, w) in out.chunks_exact_mut(4).zip(words) {
            chunk.copy_from_slice(&w.to_le_bytes());
        }
        out
    }

    pub fn decode(frame: &[u8]) -> Result<Self, TransportError> {
        if frame.len() != FIS_LEN {
            return Err(TransportError::MalformedFrame(
                "frame length is not 20 bytes",
            ));
        }
        if frame[0] != FIS_TYPE_REG_H2D {
            return Err(TransportError::MalformedFrame(
                "not a host-to-device register FIS",
            ));
        }
        let lba = u64::from_le_bytes([
            frame[4], frame[5], frame[6], frame[8], frame[9], frame[10], 0, 0,
        ]);
        Ok(RegisterFis {
            flags: frame[1],
            command: frame[2],
            features: u16::from_le_bytes([frame[3], frame[11]]),
            lba,
            device: frame[7],
            count: u16::from_le_bytes([frame[12], frame[13]]),
            icc: frame[14],
            control: frame[15],
            key: AccessKey::new(u32::from_le_bytes(frame[16..20].try_into().unwrap())),
        })
    }
}

pub fn encode_register_fis(
    command: Command,
    lba: u64,
    sector_count: u32,
    key: AccessKey,
) -> Result<[u8; FIS_LEN], TransportError> {
    Ok(RegisterFis::new(command, lba, sector_count, key)?.encode())
}

pub fn decode_register_fis(frame: &[u8]) -> Result<(Command, u64, u16, AccessKey), TransportError> {
    let fis = RegisterFis::decode(frame)?;
    let cmd = fis
        .kind()
        .ok_or(TransportError::MalformedFrame("unknown command opcode"))?;
    Ok((cmd, fis.lba, fis.count, fis.key))
}
