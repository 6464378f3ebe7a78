use crate::error::{Error, Result};

pub const MAX_PAYLOAD: usize = 8;
pub const MAX_EXTENDED_ID: u32 = (1 << 29) - 1;

/// One timestamped CAN message. Only the identifier and the data field are
/// kept; arbitration, CRC and ACK bits play no part in detection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CanFrame {
    pub timestamp: f64,
    pub id: u32,
    dlc: u8,
    data: [u8; MAX_PAYLOAD],
}

impl CanFrame {
    pub fn new(timestamp: f64, id: u32, payload: &[u8]) -> Result<Self> {
        if payload.len() > MAX_PAYLOAD {
            return Err(Error::invalid(
                "frame",
                format!("payload of {} bytes exceeds {MAX_PAYLOAD}", payload.len()),
            ));
        }
        if id > MAX_EXTENDED_ID {
            return Err(Error::invalid(
                "frame",
                format!("id {id:#x} does not fit in 29 bits"),
            ));
        }
        if !(timestamp.is_finite() && timestamp >= 0.0) {
            return Err(Error::invalid("frame", format!("timestamp {timestamp}")));
        }
        let mut data = [0u8; MAX_PAYLOAD];
        data[..payload.len()].copy_from_slice(payload);
        Ok(CanFrame {
            timestamp,
            id,
            dlc: payload.len() as u8,
            data,
        })
    }

    pub fn payload(&self) -> &[u8] {
        &self.data[..self.dlc as usize]
    }

    pub fn payload_mut(&mut self) -> &mut [u8] {
        &mut self.data[..self.dlc as usize]
    }

    pub fn len(&self) -> usize {
        self.dlc as usize
    }

    pub fn is_empty(&self) -> bool {
        self.dlc == 0
    }

    pub fn with_timestamp(mut self, timestamp: f64) -> Self {
        self.timestamp = timestamp;
        self
    }
}
