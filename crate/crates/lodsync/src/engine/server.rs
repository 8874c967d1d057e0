//! Server-side authoritative loop.

use std::collections::VecDeque;

use thiserror::Error;

use crate::duckhunt::{EntityKind, Scene};
use crate::metrics::{EventLog, Kind, PacketCounter};
use crate::model::{GroupSet, ModelError, Organization, RoleSpec};
use crate::monitor::CongestionMonitor;
use crate::wire::{self, EntityUpdate, InitEntity, InputEvent, Message, Payload};

/// Reassignment is attempted every 5 seconds, and the probe round shares the
/// same cycle so each attempt sees fresh congestion data.
pub const MAINTENANCE_PERIOD_MS: u64 = 5000;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("scene kind '{0}' has no role definition")]
    MissingRole(String),
    #[error("no entity carries the entity-of-reference role '{0}'")]
    NoEntityOfReference(String),
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ServerCounters {
    pub updates_sent: u64,
    pub probes_sent: u64,
    pub inits_sent: u64,
    pub inputs_applied: u64,
    pub malformed_datagrams: u64,
    pub reassignments: u64,
}

/// The authoritative server engine. Externally clocked: call
/// [`ServerEngine::poll`] whenever [`ServerEngine::next_deadline`] comes due
/// and feed inbound datagrams to [`ServerEngine::on_datagram`]; both return
/// encoded datagrams to put on the wire.
#[derive(Debug)]
pub struct ServerEngine {
    org: Organization,
    monitor: CongestionMonitor,
    scene: Scene,
    adaptive: bool,
    group_due: Vec<(u8, u64)>,
    maintenance_due: u64,
    tick: u32,
    seq: u32,
    started: bool,
    pub log: EventLog,
    pkts: PacketCounter,
    counters: ServerCounters,
}

impl ServerEngine {
    /// Builds the organization from the scene roster (entity role = kind
    /// name) and schedules everything to start at t = 0. With
    /// `adaptive = false` entities stay pinned to the most important group,
    /// the fixed-frequency comparison arm.
    pub fn new(
        roles: Vec<RoleSpec>,
        er_role: &str,
        groups: GroupSet,
        scene: Scene,
        adaptive: bool,
    ) -> Result<Self, EngineError> {
        let mut org = Organization::new(roles, groups, er_role)?;
        for e in &scene.entities {
            let role = e.kind.name();
            if org.role(role).is_none() {
                return Err(EngineError::MissingRole(role.to_string()));
            }
            org.add_entity(e.entity_id, role, e.state_blob())?;
        }
        if !org.entities.values().any(|e| e.role == er_role) {
            return Err(EngineError::NoEntityOfReference(er_role.to_string()));
        }
        let group_due = org.groups().groups().iter().map(|g| (g.group_id, 0)).collect();
        Ok(ServerEngine {
            org,
            monitor: CongestionMonitor::new(),
            scene,
            adaptive,
            group_due,
            maintenance_due: MAINTENANCE_PERIOD_MS,
            tick: 0,
            seq: 0,
            started: false,
            log: EventLog::new(),
            pkts: PacketCounter::new(),
            counters: ServerCounters::default(),
        })
    }

    pub fn organization(&self) -> &Organization {
        &self.org
    }

    pub fn scene(&self) -> &Scene {
        &self.scene
    }

    pub fn counters(&self) -> ServerCounters {
        self.counters
    }

    pub fn monitor(&self) -> &CongestionMonitor {
        &self.monitor
    }

    fn next_seq(&mut self) -> u32 {
        let s = self.seq;
        self.seq = self.seq.wrapping_add(1);
        s
    }

    /// Earliest instant at which [`ServerEngine::poll`] has work to do.
    pub fn next_deadline(&self) -> u64 {
        let mut next = self.maintenance_due;
        for &(_, due) in &self.group_due {
            next = next.min(due);
        }
        if let Some(d) = self.monitor.next_deadline() {
            next = next.min(d);
        }
        next
    }

    /// Runs everything due at `now`: maintenance first (so fresh group
    /// assignments take effect immediately), then per-group state updates,
    /// then due probe sends. Never emits a group's update early.
    pub fn poll(&mut self, now: u64) -> Vec<Vec<u8>> {
        let mut out = Vec::new();
        if !self.started {
            self.started = true;
            self.monitor.start_round(0).expect("first round");
        }
        if now >= self.maintenance_due {
            self.maintenance(now);
        }
        self.scene.advance_to(now);

        for gi in 0..self.group_due.len() {
            let (group_id, mut due) = self.group_due[gi];
            if due > now {
                continue;
            }
            let period = self.org.groups().period_ms(group_id).expect("configured group");
            while due <= now {
                self.emit_group_updates(group_id, now, &mut out);
                due += period;
            }
            self.group_due[gi].1 = due;
        }

        for (round_id, probe_index) in self.monitor.due_sends(now) {
            let msg = Message::new(self.next_seq(), now, Payload::Probe { round_id, probe_index });
            let bytes = wire::encode(&msg).expect("probe datagram fits");
            self.pkts.count_out(now, None, &mut self.log);
            self.counters.probes_sent += 1;
            out.push(bytes);
        }
        out
    }

    fn emit_group_updates(&mut self, group_id: u8, now: u64, out: &mut Vec<Vec<u8>>) {
        let members: Vec<u32> = self
            .org
            .entities
            .values()
            .filter(|e| e.current_group == group_id)
            .map(|e| e.entity_id)
            .collect();
        if members.is_empty() {
            return;
        }
        self.tick = self.tick.wrapping_add(1);
        let tick = self.tick;
        for id in members {
            let state = self.scene.entity(id).expect("roster entity").state_blob();
            if let Some(rec) = self.org.entities.get_mut(&id) {
                rec.state = state.clone();
                rec.last_update_tick = tick;
            }
            let msg = Message::new(
                self.next_seq(),
                now,
                Payload::StateUpdate { group_id, entities: vec![EntityUpdate { entity_id: id, tick, state }] },
            );
            let bytes = wire::encode(&msg).expect("single-entity update fits");
            self.pkts.count_out(now, Some(group_id), &mut self.log);
            self.counters.updates_sent += 1;
            out.push(bytes);
        }
    }

    /// The 5-second cycle: close the probe round, read its loss, reassign
    /// if the entity of reference would move, start the next round.
    fn maintenance(&mut self, now: u64) {
        let loss = self.monitor.finish_round(now).expect("round open since start");
        self.log.record(now, Kind::LossPercent, None, None, loss);
        let congestion = self.monitor.current_congestion();
        if self.adaptive {
            let trigger = self.org.er_trigger_check(congestion).expect("ER entity in fixed roster");
            if trigger {
                let delta = self.org.reassign_all(congestion).expect("congestion already validated");
                for mv in &delta {
                    self.log.record(now, Kind::Reassignment, Some(mv.entity_id), Some(mv.new_group), mv.old_group as f64);
                    self.counters.reassignments += 1;
                }
                if !delta.is_empty() {
                    // every moved entity is due immediately in its new group;
                    // the maintenance boundary starts a fresh epoch for all
                    for due in &mut self.group_due {
                        due.1 = now;
                    }
                }
            }
        }
        self.monitor.start_round(now).expect("previous round just closed");
        self.maintenance_due += MAINTENANCE_PERIOD_MS;
    }

    fn roster_init(&self, now: u64, seq: u32) -> Vec<u8> {
        let entities = self
            .org
            .entities
            .values()
            .map(|e| InitEntity { entity_id: e.entity_id, role: e.role.clone(), state: e.state.clone() })
            .collect();
        let msg = Message::new(seq, now, Payload::Init { entities });
        wire::encode(&msg).expect("roster init fits")
    }

    /// Handles one inbound datagram; responses (if any) are returned for
    /// sending. Malformed datagrams are counted and dropped.
    pub fn on_datagram(&mut self, bytes: &[u8], now: u64) -> Vec<Vec<u8>> {
        self.pkts.count_in(now, &mut self.log);
        let msg = match wire::decode(bytes) {
            Ok(m) => m,
            Err(_) => {
                self.counters.malformed_datagrams += 1;
                return Vec::new();
            }
        };
        match msg.payload {
            Payload::Init { entities } if entities.is_empty() => {
                // client hello: answer with the full roster
                let seq = self.next_seq();
                let reply = self.roster_init(now, seq);
                self.pkts.count_out(now, None, &mut self.log);
                self.counters.inits_sent += 1;
                vec![reply]
            }
            Payload::Input(event) => {
                self.scene.advance_to(now);
                match event {
                    InputEvent::Move { dx, dy } => {
                        if dx.is_finite() && dy.is_finite() {
                            self.scene.apply_move(dx, dy);
                            self.counters.inputs_applied += 1;
                        } else {
                            self.counters.malformed_datagrams += 1;
                        }
                    }
                    InputEvent::Shoot => {
                        self.scene.apply_shot();
                        self.counters.inputs_applied += 1;
                    }
                }
                Vec::new()
            }
            Payload::ProbeAck { round_id, probe_index } => {
                self.monitor.record_ack(round_id, probe_index, now);
                Vec::new()
            }
            _ => {
                self.counters.malformed_datagrams += 1;
                Vec::new()
            }
        }
    }

    /// Flushes the trailing packet buckets; call once when the run ends.
    pub fn finish(&mut self, end_ms: u64) {
        let mut pkts = std::mem::take(&mut self.pkts);
        pkts.finish(end_ms, &mut self.log);
    }

    /// Summary lines for the report: counters, score and the roster with
    /// each entity's initial group (the group timeline is this plus the
    /// reassignment events).
    pub fn summary_lines(&self) -> Vec<(String, String)> {
        let mut lines = vec![
            ("bot_score".into(), self.scene.score.to_string()),
            ("score_delta_sum".into(), self.scene.score_deltas().iter().sum::<i64>().to_string()),
            ("updates_sent".into(), self.counters.updates_sent.to_string()),
            ("probes_sent".into(), self.counters.probes_sent.to_string()),
            ("inits_sent".into(), self.counters.inits_sent.to_string()),
            ("inputs_applied".into(), self.counters.inputs_applied.to_string()),
            ("server_malformed".into(), self.counters.malformed_datagrams.to_string()),
            ("reassignments".into(), self.counters.reassignments.to_string()),
            ("rounds_completed".into(), self.monitor.stats().rounds_completed.to_string()),
            ("spurious_acks".into(), self.monitor.stats().spurious_acks.to_string()),
            ("last_loss_percent".into(), crate::metrics::fmt_value(self.monitor.stats().last_loss_percent)),
        ];
        for e in self.org.entities.values() {
            lines.push((format!("entity_{}", e.entity_id), format!("{}:{}", e.role, e.current_group)));
        }
        lines
    }
}

/// Queue of decoded inputs pending application, bounded to keep a
/// misbehaving client from ballooning memory.
#[derive(Debug, Default)]
pub struct InputQueue {
    queue: VecDeque<InputEvent>,
}

impl InputQueue {
    const CAP: usize = 1024;

    pub fn push(&mut self, ev: InputEvent) -> bool {
        if self.queue.len() >= Self::CAP {
            return false;
        }
        self.queue.push_back(ev);
        true
    }

    pub fn drain(&mut self) -> impl Iterator<Item = InputEvent> + '_ {
        self.queue.drain(..)
    }
}
