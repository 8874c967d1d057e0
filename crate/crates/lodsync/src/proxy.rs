//! Capacity-scheduled impairment proxy.
//!
//! A bidirectional UDP forwarder standing between client and server. Each
//! direction has an independent packets-per-second budget taken from a
//! time-indexed schedule; packets beyond the budget of the current 1-second
//! window are silently dropped (plain UDP semantics, no ICMP). That is the
//! whole congestion simulation: drops and nothing else, unless the optional
//! fixed-delay/jitter knobs are switched on.
//!
//! Windows are fixed 1000 ms intervals aligned to proxy start on purpose:
//! it keeps Forward/Drop decisions a pure function of the packet trace, so
//! the simulated and real-socket variants agree exactly. Capacity changes
//! step at each schedule offset and the last entry holds forever.

use std::io::Write;
use std::net::{SocketAddr, UdpSocket};
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScheduleError {
    #[error("{file}:{line}: {msg}")]
    Line { file: String, line: usize, msg: String },
    #[error("{file}: schedule is empty")]
    Empty { file: String },
    #[error("{file}: first entry must start at offset 0, got {got}")]
    MissingZeroOffset { file: String, got: u64 },
    #[error("reading {file}: {source}")]
    Io {
        file: String,
        #[source]
        source: std::io::Error,
    },
}

/// Time-indexed packets-per-second budget. Entries are
/// `(start_offset_s, pkts_per_s)`, strictly increasing offsets, first at 0;
/// the final entry holds forever.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CapacitySchedule {
    entries: Vec<(u64, u32)>,
}

impl CapacitySchedule {
    pub fn new(entries: Vec<(u64, u32)>) -> Result<Self, ScheduleError> {
        Self::validate(entries, "<inline>")
    }

    fn validate(entries: Vec<(u64, u32)>, file: &str) -> Result<Self, ScheduleError> {
        if entries.is_empty() {
            return Err(ScheduleError::Empty { file: file.to_string() });
        }
        if entries[0].0 != 0 {
            return Err(ScheduleError::MissingZeroOffset { file: file.to_string(), got: entries[0].0 });
        }
        Ok(CapacitySchedule { entries })
    }

    /// Parses the line-oriented schedule format: `<start_offset_s> <pkts_per_s>`
    /// per line, `#` comments.
    pub fn parse(text: &str, file: &str) -> Result<Self, ScheduleError> {
        let mut entries: Vec<(u64, u32)> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let n = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let offset: u64 = parts
                .next()
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| ScheduleError::Line { file: file.into(), line: n, msg: format!("bad offset in '{line}'") })?;
            let pkts: u32 = parts
                .next()
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| ScheduleError::Line { file: file.into(), line: n, msg: format!("bad capacity in '{line}'") })?;
            if let Some(junk) = parts.next() {
                return Err(ScheduleError::Line { file: file.into(), line: n, msg: format!("unexpected token '{junk}'") });
            }
            if pkts == 0 {
                return Err(ScheduleError::Line { file: file.into(), line: n, msg: "capacity must be >= 1".into() });
            }
            if let Some(&(prev, _)) = entries.last() {
                if offset == prev {
                    return Err(ScheduleError::Line { file: file.into(), line: n, msg: format!("duplicate offset {offset}") });
                }
                if offset < prev {
                    return Err(ScheduleError::Line {
                        file: file.into(),
                        line: n,
                        msg: format!("offset {offset} not increasing (previous {prev})"),
                    });
                }
            }
            entries.push((offset, pkts));
        }
        Self::validate(entries, file)
    }

    pub fn load(path: &Path) -> Result<Self, ScheduleError> {
        let file = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|source| ScheduleError::Io { file: file.clone(), source })?;
        Self::parse(&text, &file)
    }

    pub fn entries(&self) -> &[(u64, u32)] {
        &self.entries
    }

    /// Budget in effect `elapsed_ms` after proxy start (hold-last).
    pub fn capacity_at(&self, elapsed_ms: u64) -> u32 {
        let s = elapsed_ms / 1000;
        self.entries.iter().take_while(|(off, _)| *off <= s).last().expect("validated non-empty").1
    }
}

/// A forwarding decision for one packet.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Forward,
    Drop,
}

/// Traffic direction through the proxy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    ClientToServer = 0,
    ServerToClient = 1,
}

impl Direction {
    pub fn label(self) -> &'static str {
        match self {
            Direction::ClientToServer => "c2s",
            Direction::ServerToClient => "s2c",
        }
    }
}

/// Per-window accounting row, kept for offline analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowStats {
    /// Window start, in whole seconds since proxy start.
    pub window_s: u64,
    pub capacity: u32,
    pub forwarded: u32,
    pub dropped: u32,
}

#[derive(Debug)]
struct DirectionState {
    window_s: u64,
    forwarded: u32,
    dropped: u32,
    history: Vec<WindowStats>,
}

impl DirectionState {
    fn new() -> Self {
        DirectionState { window_s: 0, forwarded: 0, dropped: 0, history: Vec::new() }
    }

    fn roll_to(&mut self, window_s: u64, schedule: &CapacitySchedule) {
        while self.window_s < window_s {
            self.history.push(WindowStats {
                window_s: self.window_s,
                capacity: schedule.capacity_at(self.window_s * 1000),
                forwarded: self.forwarded,
                dropped: self.dropped,
            });
            self.window_s += 1;
            self.forwarded = 0;
            self.dropped = 0;
        }
    }
}

/// The admit core shared by the simulated and real-socket proxies. Clocked
/// externally with milliseconds since proxy start.
#[derive(Debug)]
pub struct ProxyCore {
    schedule: CapacitySchedule,
    dirs: [DirectionState; 2],
}

impl ProxyCore {
    pub fn new(schedule: CapacitySchedule) -> Self {
        ProxyCore { schedule, dirs: [DirectionState::new(), DirectionState::new()] }
    }

    pub fn schedule(&self) -> &CapacitySchedule {
        &self.schedule
    }

    /// Decides one packet. Forwarded iff the current window still has budget
    /// for this direction; each direction is budgeted independently.
    pub fn admit(&mut self, direction: Direction, elapsed_ms: u64) -> Verdict {
        let capacity = self.schedule.capacity_at(elapsed_ms);
        let dir = &mut self.dirs[direction as usize];
        dir.roll_to(elapsed_ms / 1000, &self.schedule);
        if dir.forwarded < capacity {
            dir.forwarded += 1;
            Verdict::Forward
        } else {
            dir.dropped += 1;
            Verdict::Drop
        }
    }

    /// Complete per-window history for a direction up to `elapsed_ms`,
    /// including zero-traffic windows.
    pub fn stats(&mut self, direction: Direction, elapsed_ms: u64) -> &[WindowStats] {
        let schedule = &self.schedule;
        self.dirs[direction as usize].roll_to(elapsed_ms / 1000, schedule);
        &self.dirs[direction as usize].history
    }

    pub fn write_stats_csv<W: Write>(&mut self, out: &mut W, elapsed_ms: u64) -> std::io::Result<()> {
        writeln!(out, "direction,window_s,capacity,received,forwarded,dropped")?;
        for dir in [Direction::ClientToServer, Direction::ServerToClient] {
            for w in self.stats(dir, elapsed_ms) {
                writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    dir.label(),
                    w.window_s,
                    w.capacity,
                    w.forwarded + w.dropped,
                    w.forwarded,
                    w.dropped
                )?;
            }
        }
        Ok(())
    }
}

/// Options for the real-socket proxy process.
#[derive(Debug, Clone)]
pub struct ProxyOptions {
    pub listen: SocketAddr,
    pub server: SocketAddr,
    pub schedule: CapacitySchedule,
    /// Fixed forwarding delay, off by default.
    pub delay_ms: u64,
    /// Extra uniform random delay in `[0, jitter_ms]`, off by default.
    /// Applied as a sleep in the forwarding path, so packet order within a
    /// direction is preserved.
    pub jitter_ms: u64,
    /// Stop after this long; `None` runs until the stop flag flips.
    pub duration: Option<Duration>,
}

/// Runs the bidirectional forwarder until the duration elapses or `stop`
/// flips. Returns the core (with its window history) for stats dumping.
///
/// Two sockets: `listen` faces the client, an ephemeral one faces the
/// server. The client's address is learned from its first datagram.
pub fn run_proxy(opts: ProxyOptions, stop: Arc<AtomicBool>) -> std::io::Result<ProxyCore> {
    let client_side = UdpSocket::bind(opts.listen)?;
    let server_side = UdpSocket::bind((opts.listen.ip(), 0))?;
    client_side.set_read_timeout(Some(Duration::from_millis(5)))?;
    server_side.set_read_timeout(Some(Duration::from_millis(5)))?;

    let core = Arc::new(Mutex::new(ProxyCore::new(opts.schedule.clone())));
    let client_addr: Arc<Mutex<Option<SocketAddr>>> = Arc::new(Mutex::new(None));
    let start = Instant::now();
    let deadline = opts.duration.map(|d| start + d);

    let mut rng_state: u64 = 0x9e3779b97f4a7c15;
    let mut next_jitter = move || {
        // xorshift is plenty for a test impairment knob
        rng_state ^= rng_state << 13;
        rng_state ^= rng_state >> 7;
        rng_state ^= rng_state << 17;
        if opts.jitter_ms == 0 {
            0
        } else {
            rng_state % (opts.jitter_ms + 1)
        }
    };

    let c2s = {
        let core = Arc::clone(&core);
        let client_addr = Arc::clone(&client_addr);
        let stop = Arc::clone(&stop);
        let client_side = client_side.try_clone()?;
        let server_side = server_side.try_clone()?;
        let server = opts.server;
        let delay = opts.delay_ms;
        std::thread::spawn(move || {
            let mut buf = [0u8; 2048];
            loop {
                if stop.load(Ordering::Relaxed) || deadline.is_some_and(|d| Instant::now() >= d) {
                    return;
                }
                match client_side.recv_from(&mut buf) {
                    Ok((len, from)) => {
                        {
                            let mut known = client_addr.lock().unwrap();
                            if known.is_none() {
                                *known = Some(from);
                            }
                        }
                        let elapsed = start.elapsed().as_millis() as u64;
                        let verdict = core.lock().unwrap().admit(Direction::ClientToServer, elapsed);
                        if verdict == Verdict::Forward {
                            if delay > 0 {
                                std::thread::sleep(Duration::from_millis(delay));
                            }
                            let _ = server_side.send_to(&buf[..len], server);
                        }
                    }
                    Err(ref e)
                        if e.kind() == std::io::ErrorKind::WouldBlock || e.kind() == std::io::ErrorKind::TimedOut => {}
                    Err(_) => return,
                }
            }
        })
    };

    // server -> client runs on this thread
    let mut buf = [0u8; 2048];
    loop {
        if stop.load(Ordering::Relaxed) || deadline.is_some_and(|d| Instant::now() >= d) {
            break;
        }
        match server_side.recv_from(&mut buf) {
            Ok((len, _from)) => {
                let elapsed = start.elapsed().as_millis() as u64;
                let verdict = core.lock().unwrap().admit(Direction::ServerToClient, elapsed);
                if verdict == Verdict::Forward {
                    let total_delay = opts.delay_ms + next_jitter();
                    if total_delay > 0 {
                        std::thread::sleep(Duration::from_millis(total_delay));
                    }
                    let target = *client_addr.lock().unwrap();
                    if let Some(addr) = target {
                        let _ = client_side.send_to(&buf[..len], addr);
                    }
                }
            }
            Err(ref e) if e.kind() == std::io::ErrorKind::WouldBlock || e.kind() == std::io::ErrorKind::TimedOut => {}
            Err(_) => break,
        }
    }
    stop.store(true, Ordering::Relaxed);
    let _ = c2s.join();

    let elapsed = start.elapsed().as_millis() as u64;
    let mut core = Arc::try_unwrap(core).expect("forwarder threads joined").into_inner().unwrap();
    core.stats(Direction::ClientToServer, elapsed);
    core.stats(Direction::ServerToClient, elapsed);
    Ok(core)
}

/// The Table 2 capacity schedule shipped with the testbed.
pub const TABLE2_SCHEDULE: &[(u64, u32)] = &[
    (0, 6000),
    (30, 3000),
    (60, 5000),
    (90, 2900),
    (120, 7000),
    (150, 2500),
    (180, 3500),
    (210, 3100),
];
