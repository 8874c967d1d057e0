//! Headless scripted shooting-game workload.
//!
//! A faithful-enough replica of a small duck-hunt game to generate realistic
//! entity traffic: ducks fly around and are worth points, flamingos must not
//! be shot, gombas crawl toward flamingos and kill them unless shot first,
//! clouds drift in the background, and a reticle is steered by inputs. A
//! deterministic bot replaces the human player; it acts on the CLIENT's
//! (possibly stale) view, which is exactly what makes update staleness cost
//! points.
//!
//! Every gameplay number here (spawn counts, speeds, hit radius, point
//! values) is testbed calibration with seeded defaults, configurable through
//! the scene file. None of them is a claim about anything; they only have to
//! make the traffic and the bot behave plausibly.

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Scene dimensions in scene units.
pub const SCENE_W: f32 = 800.0;
pub const SCENE_H: f32 = 600.0;

/// Shot hit radius around the reticle, scene units.
pub const HIT_RADIUS: f32 = 20.0;
/// A gomba this close to a flamingo kills it.
pub const GOMBA_KILL_RADIUS: f32 = 8.0;
/// A gomba within this range of a flamingo becomes the bot's priority.
pub const GOMBA_THREAT_RADIUS: f32 = 50.0;

const GROUND_Y: f32 = 560.0;
const FLAMINGO_Y: f32 = 520.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EntityKind {
    Cloud,
    Duck,
    Flamingo,
    Gomba,
    Reticle,
}

impl EntityKind {
    pub fn name(self) -> &'static str {
        match self {
            EntityKind::Cloud => "cloud",
            EntityKind::Duck => "duck",
            EntityKind::Flamingo => "flamingo",
            EntityKind::Gomba => "gomba",
            EntityKind::Reticle => "reticle",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "cloud" => EntityKind::Cloud,
            "duck" => EntityKind::Duck,
            "flamingo" => EntityKind::Flamingo,
            "gomba" => EntityKind::Gomba,
            "reticle" => EntityKind::Reticle,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Alive,
    Dead,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneEntity {
    pub entity_id: u32,
    pub kind: EntityKind,
    pub x: f32,
    pub y: f32,
    pub vx: f32,
    pub vy: f32,
    pub status: Status,
}

impl SceneEntity {
    pub fn alive(&self) -> bool {
        self.status == Status::Alive
    }

    /// 9-byte wire blob: x f32 BE, y f32 BE, status u8.
    pub fn state_blob(&self) -> Vec<u8> {
        encode_state(self.x, self.y, self.status)
    }
}

pub fn encode_state(x: f32, y: f32, status: Status) -> Vec<u8> {
    let mut out = Vec::with_capacity(9);
    out.extend_from_slice(&x.to_be_bytes());
    out.extend_from_slice(&y.to_be_bytes());
    out.push(match status {
        Status::Alive => 0,
        Status::Dead => 1,
    });
    out
}

pub fn decode_state(blob: &[u8]) -> Option<(f32, f32, Status)> {
    if blob.len() != 9 {
        return None;
    }
    let x = f32::from_be_bytes(blob[0..4].try_into().unwrap());
    let y = f32::from_be_bytes(blob[4..8].try_into().unwrap());
    let status = if blob[8] == 0 { Status::Alive } else { Status::Dead };
    Some((x, y, status))
}

#[derive(Debug, Error, PartialEq)]
pub enum WorkloadError {
    #[error("round {0} out of range 1..={1}")]
    RoundOutOfRange(u8, u8),
}

/// Scene configuration: spawn counts, speeds and point values per kind,
/// plus the RNG seed and the number of rounds in a game.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneConfig {
    pub counts: BTreeMap<EntityKind, u32>,
    pub speeds: BTreeMap<EntityKind, f32>,
    pub points: BTreeMap<EntityKind, i64>,
    pub seed: u64,
    pub rounds: u8,
    pub wave_duration_s: u64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        let counts = [
            (EntityKind::Duck, 8u32),
            (EntityKind::Flamingo, 3),
            (EntityKind::Gomba, 3),
            (EntityKind::Cloud, 5),
        ]
        .into_iter()
        .collect();
        let speeds = [
            (EntityKind::Duck, 120.0f32),
            (EntityKind::Flamingo, 40.0),
            (EntityKind::Gomba, 30.0),
            (EntityKind::Cloud, 20.0),
            (EntityKind::Reticle, 400.0),
        ]
        .into_iter()
        .collect();
        let points = [(EntityKind::Duck, 100i64), (EntityKind::Gomba, 50), (EntityKind::Flamingo, -200)]
            .into_iter()
            .collect();
        SceneConfig { counts, speeds, points, seed: 42, rounds: 5, wave_duration_s: 30 }
    }
}

impl SceneConfig {
    pub fn speed(&self, kind: EntityKind) -> f32 {
        *self.speeds.get(&kind).unwrap_or(&0.0)
    }

    pub fn points(&self, kind: EntityKind) -> i64 {
        *self.points.get(&kind).unwrap_or(&0)
    }

    /// Parses the line-oriented scene file:
    ///
    /// ```text
    /// spawn <kind> count=<n>
    /// speed <kind> <units_per_s>
    /// points <kind> <delta>
    /// seed <n>
    /// rounds <n>
    /// ```
    ///
    /// Unspecified keys keep their defaults.
    pub fn parse(text: &str, file: &str) -> Result<Self, SceneParseError> {
        let mut cfg = SceneConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let n = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| SceneParseError::Line { file: file.to_string(), line: n, msg };
            let mut parts = line.split_whitespace();
            let key = parts.next().unwrap();
            match key {
                "spawn" => {
                    let kind = parts
                        .next()
                        .and_then(EntityKind::from_name)
                        .ok_or_else(|| err(format!("bad kind in '{line}'")))?;
                    let count: u32 = parts
                        .next()
                        .and_then(|v| v.strip_prefix("count="))
                        .and_then(|v| v.parse().ok())
                        .ok_or_else(|| err(format!("bad count in '{line}'")))?;
                    cfg.counts.insert(kind, count);
                }
                "speed" => {
                    let kind = parts
                        .next()
                        .and_then(EntityKind::from_name)
                        .ok_or_else(|| err(format!("bad kind in '{line}'")))?;
                    let v: f32 =
                        parts.next().and_then(|v| v.parse().ok()).ok_or_else(|| err(format!("bad speed in '{line}'")))?;
                    cfg.speeds.insert(kind, v);
                }
                "points" => {
                    let kind = parts
                        .next()
                        .and_then(EntityKind::from_name)
                        .ok_or_else(|| err(format!("bad kind in '{line}'")))?;
                    let v: i64 =
                        parts.next().and_then(|v| v.parse().ok()).ok_or_else(|| err(format!("bad points in '{line}'")))?;
                    cfg.points.insert(kind, v);
                }
                "seed" => {
                    cfg.seed =
                        parts.next().and_then(|v| v.parse().ok()).ok_or_else(|| err(format!("bad seed in '{line}'")))?;
                }
                "rounds" => {
                    let r: u8 =
                        parts.next().and_then(|v| v.parse().ok()).ok_or_else(|| err(format!("bad rounds in '{line}'")))?;
                    if !(1..=5).contains(&r) {
                        return Err(err(format!("rounds must be in 1..=5, got {r}")));
                    }
                    cfg.rounds = r;
                }
                other => return Err(err(format!("unknown directive '{other}'"))),
            }
            if let Some(junk) = parts.next() {
                return Err(SceneParseError::Line {
                    file: file.to_string(),
                    line: n,
                    msg: format!("unexpected token '{junk}'"),
                });
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, SceneParseError> {
        let file = path.display().to_string();
        let text =
            std::fs::read_to_string(path).map_err(|source| SceneParseError::Io { file: file.clone(), source })?;
        Self::parse(&text, &file)
    }
}

#[derive(Debug, Error)]
pub enum SceneParseError {
    #[error("{file}:{line}: {msg}")]
    Line { file: String, line: usize, msg: String },
    #[error("reading {file}: {source}")]
    Io {
        file: String,
        #[source]
        source: std::io::Error,
    },
}

/// One wave: which round it is and what spawns.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveScript {
    pub round_number: u8,
    pub spawns: Vec<(EntityKind, u32)>,
    pub duration_s: u64,
}

impl WaveScript {
    pub fn for_round(cfg: &SceneConfig, round_number: u8) -> Result<Self, WorkloadError> {
        if !(1..=cfg.rounds).contains(&round_number) || round_number > 5 {
            return Err(WorkloadError::RoundOutOfRange(round_number, cfg.rounds));
        }
        let spawns = [EntityKind::Duck, EntityKind::Flamingo, EntityKind::Gomba, EntityKind::Cloud]
            .into_iter()
            .map(|k| (k, *cfg.counts.get(&k).unwrap_or(&0)))
            .collect();
        Ok(WaveScript { round_number, spawns, duration_s: cfg.wave_duration_s })
    }
}

fn wave_rng(seed: u64, round: u8) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x100000001b3).wrapping_add(round as u64))
}

fn roll_entity(rng: &mut ChaCha8Rng, id: u32, kind: EntityKind, cfg: &SceneConfig) -> SceneEntity {
    let speed = cfg.speed(kind);
    match kind {
        EntityKind::Duck => {
            let x = rng.gen_range(50.0..SCENE_W - 50.0);
            let y = rng.gen_range(50.0..400.0);
            let angle = rng.gen_range(0.0..std::f32::consts::TAU);
            SceneEntity { entity_id: id, kind, x, y, vx: speed * angle.cos(), vy: speed * angle.sin(), status: Status::Alive }
        }
        EntityKind::Flamingo => {
            let x = rng.gen_range(50.0..SCENE_W - 50.0);
            let vx = if rng.gen_bool(0.5) { speed } else { -speed };
            SceneEntity { entity_id: id, kind, x, y: FLAMINGO_Y, vx, vy: 0.0, status: Status::Alive }
        }
        EntityKind::Gomba => {
            let x = rng.gen_range(0.0..SCENE_W);
            SceneEntity { entity_id: id, kind, x, y: GROUND_Y, vx: 0.0, vy: 0.0, status: Status::Alive }
        }
        EntityKind::Cloud => {
            let x = rng.gen_range(0.0..SCENE_W);
            let y = rng.gen_range(30.0..150.0);
            SceneEntity { entity_id: id, kind, x, y, vx: speed, vy: 0.0, status: Status::Alive }
        }
        EntityKind::Reticle => {
            SceneEntity { entity_id: id, kind, x: SCENE_W / 2.0, y: SCENE_H / 2.0, vx: 0.0, vy: 0.0, status: Status::Alive }
        }
    }
}

/// Deterministic spawn for one round: the reticle (id 1) followed by the
/// configured ducks, flamingos, gombas and clouds, ids assigned in order.
/// Same `(seed, round)` always yields the identical entity set.
pub fn spawn_wave(cfg: &SceneConfig, round_number: u8) -> Result<Vec<SceneEntity>, WorkloadError> {
    let script = WaveScript::for_round(cfg, round_number)?;
    let mut rng = wave_rng(cfg.seed, round_number);
    let mut out = vec![roll_entity(&mut rng, 1, EntityKind::Reticle, cfg)];
    let mut next_id = 2u32;
    for (kind, count) in script.spawns {
        for _ in 0..count {
            out.push(roll_entity(&mut rng, next_id, kind, cfg));
            next_id += 1;
        }
    }
    Ok(out)
}

/// The authoritative scene: a fixed entity roster whose positions and
/// statuses evolve; waves reset everything but the roster ids.
#[derive(Debug, Clone)]
pub struct Scene {
    pub config: SceneConfig,
    pub entities: Vec<SceneEntity>,
    pub round: u8,
    wave_index: u32,
    wave_started_ms: u64,
    advanced_to_ms: u64,
    pub score: i64,
    score_deltas: Vec<i64>,
}

impl Scene {
    pub fn new(config: SceneConfig) -> Self {
        let entities = spawn_wave(&config, 1).expect("round 1 always valid");
        Scene {
            config,
            entities,
            round: 1,
            wave_index: 0,
            wave_started_ms: 0,
            advanced_to_ms: 0,
            score: 0,
            score_deltas: Vec::new(),
        }
    }

    pub fn reticle(&self) -> &SceneEntity {
        self.entities.iter().find(|e| e.kind == EntityKind::Reticle).expect("roster always has the reticle")
    }

    pub fn entity(&self, id: u32) -> Option<&SceneEntity> {
        self.entities.iter().find(|e| e.entity_id == id)
    }

    pub fn score_deltas(&self) -> &[i64] {
        &self.score_deltas
    }

    /// Advances kinematics by `dt` milliseconds: ducks and flamingos bounce
    /// off the scene bounds, clouds drift horizontally (constant y), gombas
    /// crawl toward the nearest alive flamingo and kill it on contact. Dead
    /// entities hold still.
    pub fn step(&mut self, dt_ms: u64) {
        if dt_ms == 0 {
            return;
        }
        let dt = dt_ms as f32 / 1000.0;
        let flamingos: Vec<(u32, f32)> =
            self.entities.iter().filter(|e| e.kind == EntityKind::Flamingo && e.alive()).map(|e| (e.entity_id, e.x)).collect();
        let mut killed_flamingos: Vec<u32> = Vec::new();

        for e in &mut self.entities {
            if !e.alive() {
                continue;
            }
            match e.kind {
                EntityKind::Duck | EntityKind::Flamingo => {
                    e.x += e.vx * dt;
                    e.y += e.vy * dt;
                    if e.x < 0.0 {
                        e.x = -e.x;
                        e.vx = -e.vx;
                    } else if e.x > SCENE_W {
                        e.x = 2.0 * SCENE_W - e.x;
                        e.vx = -e.vx;
                    }
                    if e.y < 0.0 {
                        e.y = -e.y;
                        e.vy = -e.vy;
                    } else if e.y > SCENE_H {
                        e.y = 2.0 * SCENE_H - e.y;
                        e.vy = -e.vy;
                    }
                }
                EntityKind::Cloud => {
                    e.x = (e.x + e.vx * dt).rem_euclid(SCENE_W);
                }
                EntityKind::Gomba => {
                    if let Some((fid, fx)) = flamingos
                        .iter()
                        .min_by(|a, b| (a.1 - e.x).abs().partial_cmp(&(b.1 - e.x).abs()).unwrap())
                        .copied()
                    {
                        let speed = self.config.speed(EntityKind::Gomba);
                        let step = speed * dt;
                        let dist = fx - e.x;
                        if dist.abs() <= step.max(GOMBA_KILL_RADIUS) {
                            e.x = fx;
                            killed_flamingos.push(fid);
                        } else {
                            e.x += step.copysign(dist);
                        }
                    }
                }
                EntityKind::Reticle => {}
            }
        }
        for fid in killed_flamingos {
            if let Some(f) = self.entities.iter_mut().find(|e| e.entity_id == fid) {
                f.status = Status::Dead;
                f.vx = 0.0;
                f.vy = 0.0;
            }
        }
    }

    /// Moves the scene clock to `now`, stepping kinematics and advancing the
    /// wave when it expires or runs out of ducks.
    pub fn advance_to(&mut self, now_ms: u64) {
        if now_ms <= self.advanced_to_ms {
            return;
        }
        let dt = now_ms - self.advanced_to_ms;
        self.advanced_to_ms = now_ms;
        self.step(dt);

        let ducks_alive = self.entities.iter().any(|e| e.kind == EntityKind::Duck && e.alive());
        let expired = now_ms - self.wave_started_ms >= self.config.wave_duration_s * 1000;
        if !ducks_alive || expired {
            self.next_wave(now_ms);
        }
    }

    fn next_wave(&mut self, now_ms: u64) {
        self.wave_index += 1;
        self.round = (self.wave_index % self.config.rounds as u32) as u8 + 1;
        self.wave_started_ms = now_ms;
        let fresh = spawn_wave(&self.config, self.round).expect("round cycles within 1..=rounds");
        // keep roster ids stable; refresh position, velocity and status
        for (cur, new) in self.entities.iter_mut().zip(fresh) {
            debug_assert_eq!(cur.entity_id, new.entity_id);
            let kind = cur.kind;
            *cur = SceneEntity { entity_id: cur.entity_id, kind, ..new };
        }
    }

    /// Applies one reticle move (a clamped delta from an INPUT datagram).
    pub fn apply_move(&mut self, dx: f32, dy: f32) {
        let r = self.entities.iter_mut().find(|e| e.kind == EntityKind::Reticle).expect("reticle in roster");
        r.x = (r.x + dx).clamp(0.0, SCENE_W);
        r.y = (r.y + dy).clamp(0.0, SCENE_H);
    }

    /// Resolves a shot at the authoritative reticle position: the nearest
    /// alive target within the hit radius dies, scoring duck +100, gomba
    /// +50, flamingo -200 (defaults; configurable). Clouds are decoration
    /// and cannot be hit. Empty sky scores 0.
    pub fn apply_shot(&mut self) -> i64 {
        let (rx, ry) = {
            let r = self.reticle();
            (r.x, r.y)
        };
        let target = self
            .entities
            .iter()
            .filter(|e| e.alive() && matches!(e.kind, EntityKind::Duck | EntityKind::Flamingo | EntityKind::Gomba))
            .map(|e| {
                let d2 = (e.x - rx).powi(2) + (e.y - ry).powi(2);
                (e.entity_id, d2)
            })
            .filter(|(_, d2)| *d2 <= HIT_RADIUS * HIT_RADIUS)
            .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
        let delta = match target {
            Some((id, _)) => {
                let e = self.entities.iter_mut().find(|e| e.entity_id == id).unwrap();
                e.status = Status::Dead;
                e.vx = 0.0;
                e.vy = 0.0;
                self.config.points(e.kind)
            }
            None => 0,
        };
        if delta != 0 {
            self.score += delta;
            self.score_deltas.push(delta);
        }
        delta
    }
}

/// What the bot can see: the client-side view of the entities.
#[derive(Debug, Clone, Copy)]
pub struct BotView<'a> {
    pub entities: &'a [(u32, EntityKind, f32, f32, Status)],
}

/// The bot's decision for one tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BotAction {
    Move { dx: f32, dy: f32 },
    Shoot,
    Idle,
}

/// Deterministic stand-in for the player. Works entirely on the client's
/// view: picks a gomba that threatens a flamingo if there is one, otherwise
/// the nearest alive duck, steers the reticle toward it at capped speed and
/// shoots once within the hit radius. Flamingos are never targeted.
pub fn bot_policy(view: BotView<'_>, reticle_speed: f32, tick_ms: u64) -> BotAction {
    let reticle = view.entities.iter().find(|(_, k, ..)| *k == EntityKind::Reticle);
    let Some(&(_, _, rx, ry, _)) = reticle else { return BotAction::Idle };

    let alive = |k: EntityKind| view.entities.iter().filter(move |(_, ek, _, _, st)| *ek == k && *st == Status::Alive);

    let dist2 = |x: f32, y: f32| (x - rx).powi(2) + (y - ry).powi(2);

    // a gomba close to a flamingo takes priority over ducks
    let threat = alive(EntityKind::Gomba)
        .filter(|(_, _, gx, gy, _)| {
            alive(EntityKind::Flamingo).any(|(_, _, fx, fy, _)| {
                (gx - fx).powi(2) + (gy - fy).powi(2) <= GOMBA_THREAT_RADIUS * GOMBA_THREAT_RADIUS
            })
        })
        .min_by(|a, b| dist2(a.2, a.3).partial_cmp(&dist2(b.2, b.3)).unwrap().then(a.0.cmp(&b.0)));

    let target = threat.or_else(|| {
        alive(EntityKind::Duck).min_by(|a, b| dist2(a.2, a.3).partial_cmp(&dist2(b.2, b.3)).unwrap().then(a.0.cmp(&b.0)))
    });

    let Some(&(_, _, tx, ty, _)) = target else { return BotAction::Idle };

    if dist2(tx, ty) <= HIT_RADIUS * HIT_RADIUS {
        return BotAction::Shoot;
    }
    let max_step = reticle_speed * tick_ms as f32 / 1000.0;
    let (dx, dy) = (tx - rx, ty - ry);
    let dist = (dx * dx + dy * dy).sqrt();
    let scale = (max_step / dist).min(1.0);
    BotAction::Move { dx: dx * scale, dy: dy * scale }
}
