use serde::{Deserialize, Serialize};

/// Every payload is priced at 32-bit width regardless of internal precision.
pub const BYTES_PER_ELEMENT: u64 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// client -> server
    Up,
    /// server -> client
    Down,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageKind {
    Weights,
    Activations,
    ActivationGrads,
    Labels,
}

impl MessageKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MessageKind::Weights => "weights",
            MessageKind::Activations => "activations",
            MessageKind::ActivationGrads => "activation_grads",
            MessageKind::Labels => "labels",
        }
    }
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Up => "up",
            Direction::Down => "down",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub round: usize,
    pub client: usize,
    pub direction: Direction,
    pub kind: MessageKind,
    pub elements: u64,
    pub bytes: u64,
}

/// Append-only record of every simulated transmission.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommLedger {
    messages: Vec<Message>,
}

impl CommLedger {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records a payload of `elements` scalars and returns its byte size.
    pub fn record(&mut self, round: usize, client: usize, direction: Direction, kind: MessageKind, elements: u64) -> u64 {
        let bytes = elements * BYTES_PER_ELEMENT;
        self.messages.push(Message {
            round,
            client,
            direction,
            kind,
            elements,
            bytes,
        });
        bytes
    }

    pub fn messages(&self) -> &[Message] {
        &self.messages
    }

    pub fn total_bytes(&self) -> u64 {
        self.messages.iter().map(|m| m.bytes).sum()
    }

    pub fn total_mb(&self) -> f64 {
        self.total_bytes() as f64 / (1u64 << 20) as f64
    }

    pub fn round_bytes(&self, round: usize) -> u64 {
        self.messages.iter().filter(|m| m.round == round).map(|m| m.bytes).sum()
    }

    pub fn kind_bytes(&self, kind: MessageKind) -> u64 {
        self.messages.iter().filter(|m| m.kind == kind).map(|m| m.bytes).sum()
    }

    /// Running byte total after each message.
    pub fn cumulative(&self) -> Vec<u64> {
        self.messages
            .iter()
            .scan(0u64, |acc, m| {
                *acc += m.bytes;
                Some(*acc)
            })
            .collect()
    }

    pub fn extend(&mut self, other: CommLedger) {
        self.messages.extend(other.messages);
    }
}
