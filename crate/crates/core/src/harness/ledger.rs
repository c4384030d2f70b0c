use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MessageKind {
    Pose,
    Boxes,
    Features,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MessageRecord {
    pub sender: usize,
    pub receiver: usize,
    pub kind: MessageKind,
    pub bytes: usize,
}

/// Every message exchanged during one run, in send order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommLedger {
    pub records: Vec<MessageRecord>,
}

impl CommLedger {
    pub fn record(&mut self, sender: usize, receiver: usize, kind: MessageKind, bytes: usize) {
        self.records.push(MessageRecord {
            sender,
            receiver,
            kind,
            bytes,
        });
    }

    pub fn total_bytes(&self) -> usize {
        self.records.iter().map(|r| r.bytes).sum()
    }

    pub fn by_kind(&self) -> BTreeMap<MessageKind, usize> {
        let mut out = BTreeMap::new();
        for r in &self.records {
            *out.entry(r.kind).or_insert(0) += r.bytes;
        }
        out
    }

    pub fn messages(&self, kind: MessageKind) -> impl Iterator<Item = &MessageRecord> {
        self.records.iter().filter(move |r| r.kind == kind)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn totals_add_up() {
        let mut l = CommLedger::default();
        l.record(1, 0, MessageKind::Pose, 300);
        l.record(1, 0, MessageKind::Features, 24_000);
        l.record(2, 0, MessageKind::Features, 24_000);
        assert_eq!(l.total_bytes(), 48_300);
        assert_eq!(l.by_kind()[&MessageKind::Features], 48_000);
        assert_eq!(l.messages(MessageKind::Pose).count(), 1);
        assert_eq!(serde_json::to_string(&l.records[0]).unwrap(), r#"{"sender":1,"receiver":0,"kind":"pose","bytes":300}"#);
    }
}
