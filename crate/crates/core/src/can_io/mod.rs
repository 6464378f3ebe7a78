//! Capture ingestion: candump text, the JSON signal database and attack
//! metadata.

mod candump;
mod frame;
mod metadata;
mod signals;

pub use candump::{load_capture, parse_candump, read_candump, write_candump, Capture};
pub use frame::{CanFrame, MAX_EXTENDED_ID, MAX_PAYLOAD};
pub use metadata::{load_attack_metadata, parse_attack_metadata, AttackInterval};
pub use signals::{
    decode_signals, extract_raw, insert_raw, ByteOrder, DecodeOutput, SignalDb, SignalDef,
    SignalSeries, SIGNAL_DB_VERSION,
};
