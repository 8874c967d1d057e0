//! Binary datagram codec.
//!
//! Every datagram starts with a fixed 14-byte header followed by a payload
//! determined by the message type. All integers are big-endian.
//!
//! ```text
//! header:       version u8 (0x01) | msg_type u8 | seq u32 | timestamp_ms u64
//! INIT          entity_count u16, then per entity:
//!                 entity_id u32 | role_name_len u8 | role_name | state_len u16 | state
//! STATE_UPDATE  group_id u8 | entity_count u16, then per entity:
//!                 entity_id u32 | tick u32 | state_len u16 | state
//! INPUT         input_code u8: 0x01 MOVE (dx f32, dy f32) | 0x02 SHOOT
//! PROBE         round_id u32 | probe_index u8
//! PROBE_ACK     round_id u32 | probe_index u8
//! ```
//!
//! Worked example, `PROBE(seq=1, ts=0, round=1, index=0)` encodes to 19 bytes:
//!
//! ```text
//! 01 04 00000001 0000000000000000 00000001 00
//!```
//!
//! State updates are absolute entity state, so lost datagrams are repaired by
//! the next periodic update rather than by a reliability layer.

use thiserror::Error;

/// Protocol version carried in the leading byte of every datagram.
pub const PROTOCOL_VERSION: u8 = 0x01;

/// Hard size limit for an encoded datagram, safe under typical path MTUs.
pub const MAX_DATAGRAM: usize = 1400;

/// Upper bound on a per-entity state blob (`state_len` is a u16).
pub const MAX_STATE_LEN: usize = 65535;

const MSG_INIT: u8 = 0x01;
const MSG_STATE_UPDATE: u8 = 0x02;
const MSG_INPUT: u8 = 0x03;
const MSG_PROBE: u8 = 0x04;
const MSG_PROBE_ACK: u8 = 0x05;

const INPUT_MOVE: u8 = 0x01;
const INPUT_SHOOT: u8 = 0x02;

const HEADER_LEN: usize = 14;

/// Fixed per-datagram header. `seq` is per-sender and wraps at `u32::MAX`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Header {
    pub seq: u32,
    pub timestamp_ms: u64,
}

/// One entity entry in an [`Payload::Init`] roster.
#[derive(Debug, Clone, PartialEq)]
pub struct InitEntity {
    pub entity_id: u32,
    pub role: String,
    pub state: Vec<u8>,
}

/// One entity entry in a [`Payload::StateUpdate`].
#[derive(Debug, Clone, PartialEq)]
pub struct EntityUpdate {
    pub entity_id: u32,
    pub tick: u32,
    pub state: Vec<u8>,
}

/// Player input carried by an INPUT datagram.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InputEvent {
    Move { dx: f32, dy: f32 },
    Shoot,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Init { entities: Vec<InitEntity> },
    StateUpdate { group_id: u8, entities: Vec<EntityUpdate> },
    Input(InputEvent),
    Probe { round_id: u32, probe_index: u8 },
    ProbeAck { round_id: u32, probe_index: u8 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Message {
    pub header: Header,
    pub payload: Payload,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EncodeError {
    #[error("encoded datagram would be {len} bytes, limit is {MAX_DATAGRAM}")]
    Oversize { len: usize },
    #[error("entity state blob is {len} bytes, limit is {MAX_STATE_LEN}")]
    StateTooLong { len: usize },
    #[error("role name is {len} bytes, limit is 255")]
    RoleNameTooLong { len: usize },
    #[error("{count} entities do not fit a u16 count field")]
    TooManyEntities { count: usize },
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DecodeError {
    #[error("datagram truncated: needed {needed} more bytes")]
    Truncated { needed: usize },
    #[error("unsupported protocol version 0x{0:02x}")]
    BadVersion(u8),
    #[error("unknown message type 0x{0:02x}")]
    UnknownMsgType(u8),
    #[error("unknown input code 0x{0:02x}")]
    BadInputCode(u8),
    #[error("{extra} trailing bytes after payload")]
    TrailingBytes { extra: usize },
    #[error("datagram is {len} bytes, limit is {MAX_DATAGRAM}")]
    Oversize { len: usize },
}

impl Message {
    pub fn new(seq: u32, timestamp_ms: u64, payload: Payload) -> Self {
        Message { header: Header { seq, timestamp_ms }, payload }
    }
}

fn msg_type_of(payload: &Payload) -> u8 {
    match payload {
        Payload::Init { .. } => MSG_INIT,
        Payload::StateUpdate { .. } => MSG_STATE_UPDATE,
        Payload::Input(_) => MSG_INPUT,
        Payload::Probe { .. } => MSG_PROBE,
        Payload::ProbeAck { .. } => MSG_PROBE_ACK,
    }
}

/// Encodes a message into its canonical byte layout.
pub fn encode(msg: &Message) -> Result<Vec<u8>, EncodeError> {
    let mut out = Vec::with_capacity(64);
    out.push(PROTOCOL_VERSION);
    out.push(msg_type_of(&msg.payload));
    out.extend_from_slice(&msg.header.seq.to_be_bytes());
    out.extend_from_slice(&msg.header.timestamp_ms.to_be_bytes());

    match &msg.payload {
        Payload::Init { entities } => {
            let count =
                u16::try_from(entities.len()).map_err(|_| EncodeError::TooManyEntities { count: entities.len() })?;
            out.extend_from_slice(&count.to_be_bytes());
            for e in entities {
                if e.role.len() > 255 {
                    return Err(EncodeError::RoleNameTooLong { len: e.role.len() });
                }
                if e.state.len() > MAX_STATE_LEN {
                    return Err(EncodeError::StateTooLong { len: e.state.len() });
                }
                out.extend_from_slice(&e.entity_id.to_be_bytes());
                out.push(e.role.len() as u8);
                out.extend_from_slice(e.role.as_bytes());
                out.extend_from_slice(&(e.state.len() as u16).to_be_bytes());
                out.extend_from_slice(&e.state);
            }
        }
        Payload::StateUpdate { group_id, entities } => {
            out.push(*group_id);
            let count =
                u16::try_from(entities.len()).map_err(|_| EncodeError::TooManyEntities { count: entities.len() })?;
            out.extend_from_slice(&count.to_be_bytes());
            for e in entities {
                if e.state.len() > MAX_STATE_LEN {
                    return Err(EncodeError::StateTooLong { len: e.state.len() });
                }
                out.extend_from_slice(&e.entity_id.to_be_bytes());
                out.extend_from_slice(&e.tick.to_be_bytes());
                out.extend_from_slice(&(e.state.len() as u16).to_be_bytes());
                out.extend_from_slice(&e.state);
            }
        }
        Payload::Input(event) => match event {
            InputEvent::Move { dx, dy } => {
                out.push(INPUT_MOVE);
                out.extend_from_slice(&dx.to_be_bytes());
                out.extend_from_slice(&dy.to_be_bytes());
            }
            InputEvent::Shoot => out.push(INPUT_SHOOT),
        },
        Payload::Probe { round_id, probe_index } | Payload::ProbeAck { round_id, probe_index } => {
            out.extend_from_slice(&round_id.to_be_bytes());
            out.push(*probe_index);
        }
    }

    if out.len() > MAX_DATAGRAM {
        return Err(EncodeError::Oversize { len: out.len() });
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], DecodeError> {
        if self.buf.len() - self.pos < n {
            return Err(DecodeError::Truncated { needed: n - (self.buf.len() - self.pos) });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, DecodeError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, DecodeError> {
        Ok(u16::from_be_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, DecodeError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, DecodeError> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32, DecodeError> {
        Ok(f32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }
}

/// Decodes a datagram. Total over arbitrary input: any byte sequence yields
/// either a message or a typed error.
pub fn decode(bytes: &[u8]) -> Result<Message, DecodeError> {
    if bytes.len() > MAX_DATAGRAM {
        return Err(DecodeError::Oversize { len: bytes.len() });
    }
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.remaining() < HEADER_LEN {
        return Err(DecodeError::Truncated { needed: HEADER_LEN - r.remaining() });
    }
    let version = r.u8()?;
    if version != PROTOCOL_VERSION {
        return Err(DecodeError::BadVersion(version));
    }
    let msg_type = r.u8()?;
    let seq = r.u32()?;
    let timestamp_ms = r.u64()?;

    let payload = match msg_type {
        MSG_INIT => {
            let count = r.u16()?;
            let mut entities = Vec::with_capacity(count.min(64) as usize);
            for _ in 0..count {
                let entity_id = r.u32()?;
                let role_len = r.u8()? as usize;
                let role_bytes = r.take(role_len)?;
                let role = String::from_utf8_lossy(role_bytes).into_owned();
                let state_len = r.u16()? as usize;
                let state = r.take(state_len)?.to_vec();
                entities.push(InitEntity { entity_id, role, state });
            }
            Payload::Init { entities }
        }
        MSG_STATE_UPDATE => {
            let group_id = r.u8()?;
            let count = r.u16()?;
            let mut entities = Vec::with_capacity(count.min(64) as usize);
            for _ in 0..count {
                let entity_id = r.u32()?;
                let tick = r.u32()?;
                let state_len = r.u16()? as usize;
                let state = r.take(state_len)?.to_vec();
                entities.push(EntityUpdate { entity_id, tick, state });
            }
            Payload::StateUpdate { group_id, entities }
        }
        MSG_INPUT => {
            let code = r.u8()?;
            match code {
                INPUT_MOVE => Payload::Input(InputEvent::Move { dx: r.f32()?, dy: r.f32()? }),
                INPUT_SHOOT => Payload::Input(InputEvent::Shoot),
                other => return Err(DecodeError::BadInputCode(other)),
            }
        }
        MSG_PROBE => Payload::Probe { round_id: r.u32()?, probe_index: r.u8()? },
        MSG_PROBE_ACK => Payload::ProbeAck { round_id: r.u32()?, probe_index: r.u8()? },
        other => return Err(DecodeError::UnknownMsgType(other)),
    };

    if r.remaining() > 0 {
        return Err(DecodeError::TrailingBytes { extra: r.remaining() });
    }
    Ok(Message { header: Header { seq, timestamp_ms }, payload })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Independent byte builder: assembles expected encodings field by field,
    /// without going through `encode`.
    fn build(fields: &[&[u8]]) -> Vec<u8> {
        fields.iter().flat_map(|f| f.iter().copied()).collect()
    }

    #[test]
    fn probe_encodes_to_spec_bytes() {
        let msg = Message::new(1, 0, Payload::Probe { round_id: 1, probe_index: 0 });
        let bytes = encode(&msg).unwrap();
        let expected = build(&[
            &[0x01],                     // version
            &[0x04],                     // PROBE
            &1u32.to_be_bytes(),         // seq
            &0u64.to_be_bytes(),         // timestamp
            &1u32.to_be_bytes(),         // round_id
            &[0x00],                     // probe_index
        ]);
        assert_eq!(bytes.len(), 19);
        assert_eq!(bytes, expected);
    }

    #[test]
    fn probe_ack_echo_same_length_type_05() {
        let probe = Message::new(1, 0, Payload::Probe { round_id: 1, probe_index: 0 });
        let ack = Message::new(1, 0, Payload::ProbeAck { round_id: 1, probe_index: 0 });
        let pb = encode(&probe).unwrap();
        let ab = encode(&ack).unwrap();
        assert_eq!(pb.len(), ab.len());
        assert_eq!(ab[1], 0x05);
        // only the type byte differs
        assert_eq!(&pb[2..], &ab[2..]);
    }

    #[test]
    fn empty_state_update_is_header_group_and_zero_count() {
        let msg = Message::new(7, 42, Payload::StateUpdate { group_id: 2, entities: vec![] });
        let bytes = encode(&msg).unwrap();
        let expected = build(&[
            &[0x01, 0x02],
            &7u32.to_be_bytes(),
            &42u64.to_be_bytes(),
            &[0x02],             // group_id
            &[0x00, 0x00],       // entity_count = 0
        ]);
        assert_eq!(bytes, expected);
    }

    #[test]
    fn move_input_layout() {
        let msg = Message::new(3, 9, Payload::Input(InputEvent::Move { dx: 5.0, dy: -1.5 }));
        let bytes = encode(&msg).unwrap();
        let expected = build(&[
            &[0x01, 0x03],
            &3u32.to_be_bytes(),
            &9u64.to_be_bytes(),
            &[0x01],
            &5.0f32.to_be_bytes(),
            &(-1.5f32).to_be_bytes(),
        ]);
        assert_eq!(bytes, expected);
    }

    #[test]
    fn empty_input_is_truncation_error() {
        assert!(matches!(decode(&[]), Err(DecodeError::Truncated { .. })));
    }

    #[test]
    fn version_2_rejected() {
        let mut bytes = encode(&Message::new(0, 0, Payload::Probe { round_id: 0, probe_index: 0 })).unwrap();
        bytes[0] = 0x02;
        assert_eq!(decode(&bytes), Err(DecodeError::BadVersion(0x02)));
    }

    #[test]
    fn unknown_msg_type_rejected() {
        let mut bytes = encode(&Message::new(0, 0, Payload::Probe { round_id: 0, probe_index: 0 })).unwrap();
        bytes[1] = 0x7f;
        assert_eq!(decode(&bytes), Err(DecodeError::UnknownMsgType(0x7f)));
    }

    #[test]
    fn trailing_garbage_rejected() {
        let mut bytes = encode(&Message::new(0, 0, Payload::Probe { round_id: 0, probe_index: 0 })).unwrap();
        bytes.push(0xaa);
        assert_eq!(decode(&bytes), Err(DecodeError::TrailingBytes { extra: 1 }));
    }

    #[test]
    fn unknown_input_code_rejected() {
        let mut bytes = encode(&Message::new(0, 0, Payload::Input(InputEvent::Shoot))).unwrap();
        *bytes.last_mut().unwrap() = 0x09;
        assert_eq!(decode(&bytes), Err(DecodeError::BadInputCode(0x09)));
    }

    #[test]
    fn oversize_state_rejected_at_encode() {
        let msg = Message::new(
            0,
            0,
            Payload::StateUpdate {
                group_id: 0,
                entities: vec![EntityUpdate { entity_id: 1, tick: 1, state: vec![0; 2000] }],
            },
        );
        assert!(matches!(encode(&msg), Err(EncodeError::Oversize { .. })));
    }

    fn arb_state() -> impl Strategy<Value = Vec<u8>> {
        proptest::collection::vec(any::<u8>(), 0..64)
    }

    fn arb_role() -> impl Strategy<Value = String> {
        "[a-z]{1,12}"
    }

    fn arb_payload() -> impl Strategy<Value = Payload> {
        prop_oneof![
            proptest::collection::vec(
                (any::<u32>(), arb_role(), arb_state())
                    .prop_map(|(entity_id, role, state)| InitEntity { entity_id, role, state }),
                0..12
            )
            .prop_map(|entities| Payload::Init { entities }),
            (
                any::<u8>(),
                proptest::collection::vec(
                    (any::<u32>(), any::<u32>(), arb_state())
                        .prop_map(|(entity_id, tick, state)| EntityUpdate { entity_id, tick, state }),
                    0..12
                )
            )
                .prop_map(|(group_id, entities)| Payload::StateUpdate { group_id, entities }),
            (-1e6f32..1e6f32, -1e6f32..1e6f32).prop_map(|(dx, dy)| Payload::Input(InputEvent::Move { dx, dy })),
            Just(Payload::Input(InputEvent::Shoot)),
            (any::<u32>(), any::<u8>()).prop_map(|(round_id, probe_index)| Payload::Probe { round_id, probe_index }),
            (any::<u32>(), any::<u8>())
                .prop_map(|(round_id, probe_index)| Payload::ProbeAck { round_id, probe_index }),
        ]
    }

    proptest! {
        #[test]
        fn round_trip_identity(seq in any::<u32>(), ts in any::<u64>(), payload in arb_payload()) {
            let msg = Message::new(seq, ts, payload);
            let bytes = encode(&msg).unwrap();
            prop_assert!(bytes.len() <= MAX_DATAGRAM);
            let back = decode(&bytes).unwrap();
            prop_assert_eq!(back, msg);
        }

        #[test]
        fn decoder_never_panics(bytes in proptest::collection::vec(any::<u8>(), 0..256)) {
            let _ = decode(&bytes);
        }
    }
}
