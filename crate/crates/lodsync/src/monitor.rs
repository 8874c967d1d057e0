//! Packet-loss measurement via probe rounds.
//!
//! The server periodically sends 100 probe datagrams, one every 50 ms, and
//! counts the acks that come back; every missing ack is loss. The last
//! completed round's loss percentage is the congestion value the assignment
//! policy consumes. No smoothing is applied: the raw last-round value is
//! used (an EMA would be a straightforward extension point).
//!
//! Probes and acks are real traffic: they traverse the impairment proxy and
//! spend its capacity budget like any other datagram.

use thiserror::Error;

/// Probes per round.
pub const PROBES_PER_ROUND: u8 = 100;
/// Spacing between consecutive probe sends.
pub const PROBE_SPACING_MS: u64 = 50;
/// Grace period after the last send before the round closes on its own.
/// Bounds a round at 5.45 s; the engine normally closes it earlier, at the
/// 5 s maintenance boundary.
pub const ACK_TIMEOUT_MS: u64 = 500;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MonitorError {
    #[error("round {0} is still open; a new round cannot start")]
    RoundAlreadyOpen(u32),
    #[error("no round is open")]
    NoOpenRound,
    #[error("round {0} is not finished; loss is undefined before the deadline")]
    RoundStillOpen(u32),
}

/// One measurement round. Send times are fixed at creation:
/// `started_at + 50 * index` for indices `0..100`.
#[derive(Debug, Clone)]
pub struct ProbeRound {
    pub round_id: u32,
    started_at: u64,
    sent: u8,
    acked: [bool; PROBES_PER_ROUND as usize],
    closed_at: Option<u64>,
}

impl ProbeRound {
    fn new(round_id: u32, now: u64) -> Self {
        ProbeRound { round_id, started_at: now, sent: 0, acked: [false; 100], closed_at: None }
    }

    pub fn send_time(&self, index: u8) -> u64 {
        self.started_at + PROBE_SPACING_MS * index as u64
    }

    /// Time after which the round closes if nobody closes it first.
    pub fn deadline(&self) -> u64 {
        self.send_time(PROBES_PER_ROUND - 1) + ACK_TIMEOUT_MS
    }

    pub fn is_closed(&self) -> bool {
        self.closed_at.is_some()
    }

    pub fn ack_count(&self) -> u8 {
        self.acked.iter().filter(|a| **a).count() as u8
    }

    /// Loss percentage over the round's 100 probes. Defined only once the
    /// round is closed (deadline passed or explicitly finished).
    pub fn loss_percent(&self) -> Result<f64, MonitorError> {
        if !self.is_closed() {
            return Err(MonitorError::RoundStillOpen(self.round_id));
        }
        Ok(f64::from(PROBES_PER_ROUND - self.ack_count()))
    }
}

/// Counter snapshot for the metrics report.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MonitorStats {
    pub rounds_completed: u64,
    pub spurious_acks: u64,
    pub last_loss_percent: f64,
}

/// Owns the round lifecycle. Single-owner: the engine loop starts rounds,
/// pulls due sends and feeds acks back in.
#[derive(Debug, Default)]
pub struct CongestionMonitor {
    next_round_id: u32,
    open: Option<ProbeRound>,
    last_loss: Option<f64>,
    rounds_completed: u64,
    spurious_acks: u64,
}

impl CongestionMonitor {
    pub fn new() -> Self {
        Self::default()
    }

    /// Opens a new round with sends scheduled at `now, now+50, ..., now+4950`.
    pub fn start_round(&mut self, now: u64) -> Result<&ProbeRound, MonitorError> {
        if let Some(r) = &self.open {
            if !r.is_closed() {
                return Err(MonitorError::RoundAlreadyOpen(r.round_id));
            }
        }
        let id = self.next_round_id;
        self.next_round_id = self.next_round_id.wrapping_add(1);
        self.open = Some(ProbeRound::new(id, now));
        Ok(self.open.as_ref().unwrap())
    }

    pub fn open_round(&self) -> Option<&ProbeRound> {
        self.open.as_ref()
    }

    /// Probe sends that have come due. Marks them sent; each `(round_id,
    /// probe_index)` pair is handed out exactly once, in index order.
    pub fn due_sends(&mut self, now: u64) -> Vec<(u32, u8)> {
        let mut due = Vec::new();
        if let Some(r) = &mut self.open {
            if r.is_closed() {
                return due;
            }
            while r.sent < PROBES_PER_ROUND && r.send_time(r.sent) <= now {
                due.push((r.round_id, r.sent));
                r.sent += 1;
            }
        }
        due
    }

    /// Next instant at which this monitor needs servicing (a send or the
    /// round's own deadline), if a round is in flight.
    pub fn next_deadline(&self) -> Option<u64> {
        let r = self.open.as_ref()?;
        if r.is_closed() {
            return None;
        }
        if r.sent < PROBES_PER_ROUND {
            Some(r.send_time(r.sent))
        } else {
            Some(r.deadline())
        }
    }

    /// Feeds an ack back in. Duplicates and acks after the deadline (or
    /// after an explicit close) are ignored; acks for a stale round id are
    /// ignored as leftover network traffic; acks for an index that was never
    /// sent bump the spurious counter.
    pub fn record_ack(&mut self, round_id: u32, probe_index: u8, now: u64) {
        let Some(r) = &mut self.open else { return };
        if r.round_id != round_id {
            return; // stale traffic from an earlier round
        }
        if r.is_closed() || now > r.deadline() {
            return;
        }
        if probe_index >= r.sent {
            self.spurious_acks += 1;
            return;
        }
        r.acked[probe_index as usize] = true;
    }

    /// Lets the deadline close an aged round without an explicit finish.
    pub fn poll(&mut self, now: u64) {
        let deadline_passed = matches!(&self.open, Some(r) if !r.is_closed() && now >= r.deadline());
        if deadline_passed {
            self.finish_round(now).expect("round is open");
        }
    }

    /// Closes the open round at `now` (the engine calls this at the 5 s
    /// maintenance boundary, before the round's own 5.45 s deadline; later
    /// acks are ignored). Returns the round's loss percentage.
    pub fn finish_round(&mut self, now: u64) -> Result<f64, MonitorError> {
        let r = self.open.as_mut().ok_or(MonitorError::NoOpenRound)?;
        if r.is_closed() {
            return Err(MonitorError::NoOpenRound);
        }
        r.closed_at = Some(now);
        let loss = r.loss_percent().expect("just closed");
        self.last_loss = Some(loss);
        self.rounds_completed += 1;
        Ok(loss)
    }

    /// The congestion value consumed by the assignment policy: the most
    /// recent completed round's loss. Optimistically 0 before any round
    /// completes.
    pub fn current_congestion(&self) -> f64 {
        self.last_loss.unwrap_or(0.0)
    }

    pub fn stats(&self) -> MonitorStats {
        MonitorStats {
            rounds_completed: self.rounds_completed,
            spurious_acks: self.spurious_acks,
            last_loss_percent: self.current_congestion(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn drive_full_round(m: &mut CongestionMonitor, start: u64) -> Vec<(u32, u8)> {
        m.start_round(start).unwrap();
        let mut sends = Vec::new();
        for i in 0..PROBES_PER_ROUND as u64 {
            sends.extend(m.due_sends(start + i * PROBE_SPACING_MS));
        }
        sends
    }

    #[test]
    fn round_schedule_is_50ms_spaced() {
        let mut m = CongestionMonitor::new();
        let r = m.start_round(0).unwrap();
        assert_eq!(r.send_time(0), 0);
        assert_eq!(r.send_time(99), 4950);
        assert_eq!(r.deadline(), 5450);

        let mut m2 = CongestionMonitor::new();
        let r2 = m2.start_round(1000).unwrap();
        assert_eq!(r2.send_time(0), 1000);
        assert_eq!(r2.send_time(99), 5950);
    }

    #[test]
    fn due_sends_hand_out_each_index_once() {
        let mut m = CongestionMonitor::new();
        let sends = drive_full_round(&mut m, 0);
        assert_eq!(sends.len(), 100);
        assert_eq!(sends[0], (0, 0));
        assert_eq!(sends[99], (0, 99));
        assert!(m.due_sends(10_000).is_empty());
    }

    #[test]
    fn double_start_is_an_error() {
        let mut m = CongestionMonitor::new();
        m.start_round(0).unwrap();
        assert_eq!(m.start_round(1).unwrap_err(), MonitorError::RoundAlreadyOpen(0));
    }

    #[test]
    fn duplicate_acks_count_once() {
        let mut m = CongestionMonitor::new();
        drive_full_round(&mut m, 0);
        m.record_ack(0, 7, 4960);
        m.record_ack(0, 7, 4961);
        assert_eq!(m.open_round().unwrap().ack_count(), 1);
    }

    #[test]
    fn acks_after_deadline_are_ignored() {
        let mut m = CongestionMonitor::new();
        drive_full_round(&mut m, 0);
        m.record_ack(0, 1, 5451);
        assert_eq!(m.open_round().unwrap().ack_count(), 0);
    }

    #[test]
    fn ack_for_unsent_index_is_spurious() {
        let mut m = CongestionMonitor::new();
        m.start_round(0).unwrap();
        m.due_sends(0); // only index 0 sent so far
        m.record_ack(0, 50, 10);
        m.record_ack(0, 200, 10);
        assert_eq!(m.stats().spurious_acks, 2);
        m.record_ack(99, 0, 10); // unknown round: plain stale traffic
        assert_eq!(m.stats().spurious_acks, 2);
    }

    #[test]
    fn loss_is_missing_ack_percentage() {
        for (acks, expect) in [(90u8, 10.0), (100, 0.0), (0, 100.0)] {
            let mut m = CongestionMonitor::new();
            drive_full_round(&mut m, 0);
            for i in 0..acks {
                m.record_ack(0, i, 4990);
            }
            let loss = m.finish_round(5000).unwrap();
            assert_eq!(loss, expect);
            assert_eq!(m.current_congestion(), expect);
        }
    }

    #[test]
    fn loss_before_close_is_an_error() {
        let mut m = CongestionMonitor::new();
        drive_full_round(&mut m, 0);
        assert_eq!(m.open_round().unwrap().loss_percent(), Err(MonitorError::RoundStillOpen(0)));
    }

    #[test]
    fn deadline_poll_closes_the_round() {
        let mut m = CongestionMonitor::new();
        drive_full_round(&mut m, 0);
        m.poll(5449);
        assert!(!m.open_round().unwrap().is_closed());
        m.poll(5450);
        assert!(m.open_round().unwrap().is_closed());
        assert_eq!(m.stats().rounds_completed, 1);
        // a fresh round may start now
        m.start_round(6000).unwrap();
    }

    #[test]
    fn exact_k_drops_give_exact_loss() {
        // impairment dropping exactly k of 100 probes => loss == k
        for k in [0u8, 1, 7, 10, 50, 100] {
            let mut m = CongestionMonitor::new();
            let sends = drive_full_round(&mut m, 0);
            for &(round, idx) in &sends {
                if idx >= k {
                    m.record_ack(round, idx, 4990);
                }
            }
            assert_eq!(m.finish_round(5000).unwrap(), f64::from(k));
        }
    }

    #[test]
    fn optimistic_default_before_any_round() {
        let m = CongestionMonitor::new();
        assert_eq!(m.current_congestion(), 0.0);
    }

    #[test]
    fn latest_round_wins() {
        let mut m = CongestionMonitor::new();
        drive_full_round(&mut m, 0);
        for i in 5..100 {
            m.record_ack(0, i, 4990);
        }
        assert_eq!(m.finish_round(5000).unwrap(), 5.0);

        let sends = drive_full_round(&mut m, 5000);
        for &(round, idx) in &sends[..80] {
            m.record_ack(round, idx, 9990);
        }
        assert_eq!(m.finish_round(10_000).unwrap(), 20.0);
        assert_eq!(m.current_congestion(), 20.0);
    }

    #[test]
    fn loss_is_bounded_and_monotone_in_acks() {
        let mut prev = 101.0;
        for acks in 0..=100u8 {
            let mut m = CongestionMonitor::new();
            drive_full_round(&mut m, 0);
            for i in 0..acks {
                m.record_ack(0, i, 4990);
            }
            let loss = m.finish_round(5000).unwrap();
            assert!((0.0..=100.0).contains(&loss));
            assert!(loss < prev);
            prev = loss;
        }
    }
}
