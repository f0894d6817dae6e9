use std::collections::BTreeMap;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use super::ProtocolError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Action {
    Measurement {
        qubit: String,
        basis: String,
        outcome: String,
    },
    Message {
        to: String,
        content: String,
    },
    /// Unconditional local unitary.
    Operation {
        qubit: String,
        operation: String,
    },
    /// Local unitary conditioned on an earlier message (`after` is its sequence number).
    Correction {
        qubit: String,
        operation: String,
        after: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Event {
    /// Position in the branch's causal order.
    pub seq: usize,
    pub branch: String,
    pub actor: String,
    pub action: Action,
}

/// Receipt of a delivered classical message; required to log a correction.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MessageReceipt {
    seq: usize,
    to: String,
}

impl MessageReceipt {
    pub fn recipient(&self) -> &str {
        &self.to
    }
}

/// Event log of a single measurement branch.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct BranchLog {
    events: Vec<Event>,
}

impl BranchLog {
    pub fn events(&self) -> &[Event] {
        &self.events
    }

    /// Rewrites the branch id of every event.
    pub fn relabel(&mut self, branch: &str) {
        for e in &mut self.events {
            e.branch = branch.to_string();
        }
    }

    fn push(&mut self, branch: &str, actor: &str, action: Action) -> usize {
        let seq = self.events.len();
        self.events.push(Event {
            seq,
            branch: branch.to_string(),
            actor: actor.to_string(),
            action,
        });
        seq
    }

    pub fn measurement(
        &mut self,
        branch: &str,
        actor: &str,
        qubit: &str,
        basis: &str,
        outcome: &str,
    ) {
        self.push(
            branch,
            actor,
            Action::Measurement {
                qubit: qubit.into(),
                basis: basis.into(),
                outcome: outcome.into(),
            },
        );
    }

    pub fn message(&mut self, branch: &str, from: &str, to: &str, content: &str) -> MessageReceipt {
        let seq = self.push(
            branch,
            from,
            Action::Message {
                to: to.into(),
                content: content.into(),
            },
        );
        MessageReceipt {
            seq,
            to: to.to_string(),
        }
    }

    pub fn operation(&mut self, branch: &str, actor: &str, qubit: &str, operation: &str) {
        self.push(
            branch,
            actor,
            Action::Operation {
                qubit: qubit.into(),
                operation: operation.into(),
            },
        );
    }

    /// Logs a correction by the message recipient.
    pub fn correction(
        &mut self,
        branch: &str,
        receipt: &MessageReceipt,
        qubit: &str,
        operation: &str,
    ) {
        self.push(
            branch,
            &receipt.to,
            Action::Correction {
                qubit: qubit.into(),
                operation: operation.into(),
                after: receipt.seq,
            },
        );
    }
}

/// Classical event log across all branches of a run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ProtocolTranscript {
    pub events: Vec<Event>,
}

impl ProtocolTranscript {
    pub fn from_logs<'a>(logs: impl IntoIterator<Item = &'a BranchLog>) -> Self {
        Self {
            events: logs
                .into_iter()
                .flat_map(|l| l.events.iter().cloned())
                .collect(),
        }
    }

    /// Events grouped by branch id, each group in causal order.
    pub fn branches(&self) -> BTreeMap<&str, Vec<&Event>> {
        let mut out: BTreeMap<&str, Vec<&Event>> = BTreeMap::new();
        for e in &self.events {
            out.entry(e.branch.as_str()).or_default().push(e);
        }
        out
    }

    pub fn count<F: Fn(&Action) -> bool>(&self, branch: &str, pred: F) -> usize {
        self.events
            .iter()
            .filter(|e| e.branch == branch && pred(&e.action))
            .count()
    }

    /// Every correction follows the message it depends on, addressed to the corrector.
    pub fn check_causality(&self) -> Result<(), ProtocolError> {
        for (branch, events) in self.branches() {
            for (pos, e) in events.iter().enumerate() {
                if e.seq != pos {
                    return Err(ProtocolError::OrderViolation(format!(
                        "branch {branch}: event {pos} has sequence number {}",
                        e.seq
                    )));
                }
                if let Action::Correction { after, .. } = &e.action {
                    let ok = *after < pos
                        && matches!(
                            &events[*after].action,
                            Action::Message { to, .. } if *to == e.actor
                        );
                    if !ok {
                        return Err(ProtocolError::OrderViolation(format!(
                            "branch {branch}: correction by {} at {pos} has no preceding message (refers to {after})",
                            e.actor
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Every action by a party other than `controller` comes after the controller's first measurement.
    pub fn check_control(&self, controller: &str) -> Result<(), ProtocolError> {
        for (branch, events) in self.branches() {
            let first = events.iter().position(|e| {
                e.actor == controller && matches!(e.action, Action::Measurement { .. })
            });
            for (pos, e) in events.iter().enumerate() {
                if e.actor != controller && first.is_none_or(|f| pos < f) {
                    return Err(ProtocolError::OrderViolation(format!(
                        "branch {branch}: {} acts at {pos} without permission from {controller}",
                        e.actor
                    )));
                }
            }
        }
        Ok(())
    }

    /// One JSON object per line.
    pub fn write_json_lines<W: Write>(&self, mut w: W) -> io::Result<()> {
        for e in &self.events {
            serde_json::to_writer(&mut w, e)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_json_lines(&self) -> String {
        let mut buf = Vec::new();
        self.write_json_lines(&mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("json is utf-8")
    }

    pub fn from_json_lines(text: &str) -> Result<Self, serde_json::Error> {
        let events = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<Result<_, _>>()?;
        Ok(Self { events })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn correction_needs_preceding_message() {
        let mut log = BranchLog::default();
        log.measurement("x", "Alice", "a", "X", "-");
        let r = log.message("x", "Alice", "Bob", "-");
        log.correction("x", &r, "b", "sigma_x");
        let t = ProtocolTranscript::from_logs([&log]);
        t.check_causality().unwrap();
        t.check_control("Alice").unwrap();

        let mut bad = t.clone();
        bad.events.swap(1, 2);
        bad.events[1].seq = 1;
        bad.events[2].seq = 2;
        assert!(matches!(
            bad.check_causality(),
            Err(ProtocolError::OrderViolation(_))
        ));
    }

    #[test]
    fn control_violation_detected() {
        let mut log = BranchLog::default();
        log.operation("x", "Bob", "b", "rot");
        log.measurement("x", "Alice", "a", "X", "+");
        let t = ProtocolTranscript::from_logs([&log]);
        assert!(t.check_control("Alice").is_err());
    }

    #[test]
    fn json_lines_round_trip() {
        let mut log = BranchLog::default();
        log.measurement("b0", "Alice", "a", "X", "+");
        let r = log.message("b0", "Alice", "Bob", "+");
        log.correction("b0", &r, "b", "sigma_x");
        let t = ProtocolTranscript::from_logs([&log]);
        let text = t.to_json_lines();
        assert_eq!(text.lines().count(), 3);
        assert!(text.lines().next().unwrap().contains("\"actor\":\"Alice\""));
        assert_eq!(ProtocolTranscript::from_json_lines(&text).unwrap(), t);
    }
}
