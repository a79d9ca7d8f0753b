use std::collections::VecDeque;

use super::{RbcConfig, RbcError, RbcInstance, RbcMessage};
use crate::types::{Deployment, Depth, Outgoing, RbcKind, ReplicaId};

/// What one failure-free broadcast cost.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RbcMeasurement {
    pub messages: u64,
    pub bytes: u64,
    /// Largest delivery depth among active replicas.
    pub active_depth: u32,
    /// Largest delivery depth among learners, if the variant has any.
    pub learner_depth: Option<u32>,
    pub delivered: usize,
}

/// Runs one broadcast among honest replicas with FIFO delivery and counts
/// every message sent.
pub fn measure_failure_free(
    dep: Deployment,
    sender: ReplicaId,
    variant: RbcKind,
    value: &[u8],
) -> Result<RbcMeasurement, RbcError> {
    let cfg = RbcConfig::new(dep, sender, variant)?;
    let mut nodes: Vec<RbcInstance> = dep
        .replicas()
        .map(|r| RbcInstance::new(cfg.clone(), r))
        .collect();
    let mut queue: VecDeque<(ReplicaId, Outgoing<RbcMessage>)> = VecDeque::new();
    let mut m = RbcMeasurement {
        messages: 0,
        bytes: 0,
        active_depth: 0,
        learner_depth: None,
        delivered: 0,
    };
    let send = |from: ReplicaId,
                out: Vec<Outgoing<RbcMessage>>,
                q: &mut VecDeque<_>,
                m: &mut RbcMeasurement| {
        for o in out {
            m.messages += 1;
            m.bytes += o.message.encoded_len() as u64;
            q.push_back((from, o));
        }
    };
    let step = nodes[sender.index()].input(value, Depth::ZERO)?;
    send(sender, step.messages, &mut queue, &mut m);
    while let Some((from, out)) = queue.pop_front() {
        let to = out.to;
        let step = nodes[to.index()].handle(from, out.message, out.depth);
        if let Some(d) = step.output {
            m.delivered += 1;
            if cfg.is_active(to) {
                m.active_depth = m.active_depth.max(d.depth.step);
            } else {
                m.learner_depth = Some(m.learner_depth.unwrap_or(0).max(d.depth.step));
            }
        }
        send(to, step.messages, &mut queue, &mut m);
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rbc::analytic_message_count;
    use crate::types::Resilience;

    #[test]
    fn avid_at_four() {
        let dep = Deployment::new(4, 1, Resilience::ThreeF).unwrap();
        let m = measure_failure_free(dep, ReplicaId(0), RbcKind::Avid, b"abc").unwrap();
        assert_eq!(m.messages, 36);
        assert_eq!(m.messages, analytic_message_count(RbcKind::Avid, &dep));
        assert_eq!((m.active_depth, m.learner_depth, m.delivered), (3, None, 4));
        assert!(m.bytes > m.messages);
    }

    #[test]
    fn learners_reported_separately() {
        let dep = Deployment::new(15, 2, Resilience::SevenF).unwrap();
        let m = measure_failure_free(dep, ReplicaId(3), RbcKind::MbcL, b"value").unwrap();
        assert_eq!(m.messages, 176);
        assert_eq!(
            (m.active_depth, m.learner_depth, m.delivered),
            (2, Some(3), 15)
        );
    }
}
