use std::collections::VecDeque;

use rand::{Rng as _, SeedableRng};

use super::{Action, ActionSpace, Environment, Observation, StepResult};
use crate::corruptions::{corrupt, CorruptionSpec, Frame};
use crate::rng::Rng;
use crate::{Error, Result};

/// Desk-scale pixel pong. Frames are rendered binary (background 0, paddles
/// and ball 1) at `frame_size`², optionally corrupted, then stacked.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MiniPongParams {
    pub frame_size: usize,
    pub paddle_len: usize,
    pub ball_speed: f64,
    /// Probability per step that the scripted opponent tracks the ball.
    pub opponent_skill: f64,
    pub max_score: usize,
    pub frame_stack: usize,
}

impl Default for MiniPongParams {
    fn default() -> Self {
        Self {
            frame_size: 84,
            paddle_len: 12,
            ball_speed: 2.0,
            opponent_skill: 0.9,
            max_score: 21,
            frame_stack: 4,
        }
    }
}

impl MiniPongParams {
    pub fn validate(&self) -> Result<()> {
        if self.frame_size < 16 {
            return Err(Error::Config("minipong frame_size must be >= 16".into()));
        }
        if self.frame_stack < 1 {
            return Err(Error::Config("minipong frame_stack must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.opponent_skill) {
            return Err(Error::Config("minipong opponent_skill must be in [0,1]".into()));
        }
        if !(self.ball_speed > 0.0) || self.paddle_len == 0 || self.max_score == 0 {
            return Err(Error::Config("minipong parameters must be positive".into()));
        }
        Ok(())
    }
}

const PADDLE_SPEED: f64 = 2.0;
/// Safety cap so degenerate rallies cannot spin forever.
const HARD_STEP_CAP: usize = 10_000;

#[derive(Debug, Clone)]
pub struct MiniPong {
    pub params: MiniPongParams,
    pub(crate) variant: String,
    corruption: Option<CorruptionSpec>,
    rng: Rng,
    frames: VecDeque<Frame>,
    // paddle centers (y), ball position and velocity
    py: f64,
    oy: f64,
    bx: f64,
    by: f64,
    vx: f64,
    vy: f64,
    score_player: usize,
    score_opponent: usize,
    steps: usize,
    done: bool,
}

impl MiniPong {
    pub fn new(params: MiniPongParams) -> Self {
        Self {
            params,
            variant: "default".into(),
            corruption: None,
            rng: Rng::seed_from_u64(0),
            frames: VecDeque::new(),
            py: 0.0,
            oy: 0.0,
            bx: 0.0,
            by: 0.0,
            vx: 0.0,
            vy: 0.0,
            score_player: 0,
            score_opponent: 0,
            steps: 0,
            done: true,
        }
    }

    /// Corruption applied to each rendered frame before stacking.
    pub fn with_corruption(mut self, spec: CorruptionSpec) -> Self {
        self.variant = format!(
            "{}/{}",
            spec.kind_name(),
            spec.severity_label.map(|s| s.to_string()).unwrap_or_else(|| "custom".into())
        );
        self.corruption = Some(spec);
        self
    }

    pub fn scores(&self) -> (usize, usize) {
        (self.score_player, self.score_opponent)
    }

    fn half_len(&self) -> f64 {
        self.params.paddle_len as f64 / 2.0
    }

    fn serve(&mut self, toward_player: bool) {
        let n = self.params.frame_size as f64;
        self.bx = n / 2.0;
        self.by = n / 2.0;
        self.vx = if toward_player { self.params.ball_speed } else { -self.params.ball_speed };
        self.vy = (self.rng.random::<f64>() - 0.5) * self.params.ball_speed;
    }

    /// Render the raw binary frame: background 0.0, paddles and ball 1.0.
    pub fn render_raw(&self) -> Frame {
        let n = self.params.frame_size;
        let mut frame = Frame::new(n, n);
        let half = self.half_len();
        let draw_paddle = |frame: &mut Frame, x0: usize, center: f64| {
            let y0 = ((center - half).round().max(0.0)) as usize;
            let y1 = ((center + half).round() as usize).min(n - 1);
            for y in y0..=y1 {
                frame.set(x0, y, 1.0);
                frame.set(x0 + 1, y, 1.0);
            }
        };
        draw_paddle(&mut frame, 1, self.oy);
        draw_paddle(&mut frame, n - 3, self.py);
        let bx = self.bx.round() as i64;
        let by = self.by.round() as i64;
        for dy in 0..2i64 {
            for dx in 0..2i64 {
                let x = bx + dx;
                let y = by + dy;
                if (0..n as i64).contains(&x) && (0..n as i64).contains(&y) {
                    frame.set(x as usize, y as usize, 1.0);
                }
            }
        }
        frame
    }

    fn push_frame(&mut self) -> Result<()> {
        let mut frame = self.render_raw();
        if let Some(spec) = &self.corruption {
            frame = corrupt(&frame, spec, &mut self.rng)?;
        }
        if self.frames.len() == self.params.frame_stack {
            self.frames.pop_front();
        }
        self.frames.push_back(frame);
        Ok(())
    }

    fn observe(&self) -> Observation {
        Observation::Frames(self.frames.iter().cloned().collect())
    }

    #[cfg(test)]
    pub(crate) fn set_ball(&mut self, bx: f64, by: f64, vx: f64, vy: f64) {
        self.bx = bx;
        self.by = by;
        self.vx = vx;
        self.vy = vy;
    }
}

impl Environment for MiniPong {
    fn reset(&mut self, rng: &mut Rng) -> Observation {
        self.rng = Rng::seed_from_u64(rng.random::<u64>());
        let n = self.params.frame_size as f64;
        self.py = n / 2.0;
        self.oy = n / 2.0;
        self.score_player = 0;
        self.score_opponent = 0;
        self.steps = 0;
        self.done = false;
        let toward_player = self.rng.random::<bool>();
        self.serve(toward_player);
        self.frames.clear();
        // pad the stack by replicating the first frame
        let mut first = self.render_raw();
        if let Some(spec) = &self.corruption {
            first = corrupt(&first, spec, &mut self.rng).expect("valid corruption spec");
        }
        for _ in 0..self.params.frame_stack {
            self.frames.push_back(first.clone());
        }
        self.observe()
    }

    fn step(&mut self, action: &Action) -> Result<StepResult> {
        if self.done {
            return Err(Error::Usage("step on finished minipong episode".into()));
        }
        let n = self.params.frame_size as f64;
        let half = self.half_len();
        match action {
            Action::Discrete(0) => {}
            Action::Discrete(1) => self.py = (self.py - PADDLE_SPEED).max(half),
            Action::Discrete(2) => self.py = (self.py + PADDLE_SPEED).min(n - 1.0 - half),
            other => return Err(Error::Usage(format!("invalid minipong action {other:?}"))),
        }
        // scripted opponent: track the ball with probability opponent_skill
        if self.rng.random::<f64>() < self.params.opponent_skill {
            let delta = (self.by - self.oy).clamp(-PADDLE_SPEED, PADDLE_SPEED);
            self.oy = (self.oy + delta).clamp(half, n - 1.0 - half);
        }
        // ball kinematics
        self.bx += self.vx;
        self.by += self.vy;
        if self.by < 0.0 {
            self.by = -self.by;
            self.vy = -self.vy;
        }
        if self.by > n - 1.0 {
            self.by = 2.0 * (n - 1.0) - self.by;
            self.vy = -self.vy;
        }
        // paddle faces: opponent front at x=3, player front at x=n-4
        let player_x = n - 4.0;
        let opponent_x = 3.0;
        if self.vx > 0.0 && self.bx >= player_x && (self.by - self.py).abs() <= half {
            self.bx = 2.0 * player_x - self.bx;
            self.vx = -self.vx;
            self.vy = (self.by - self.py) / half * self.params.ball_speed;
        } else if self.vx < 0.0 && self.bx <= opponent_x && (self.by - self.oy).abs() <= half {
            self.bx = 2.0 * opponent_x - self.bx;
            self.vx = -self.vx;
            self.vy = (self.by - self.oy) / half * self.params.ball_speed;
        }
        let mut reward = 0.0;
        if self.bx < 0.0 {
            self.score_player += 1;
            reward = 1.0;
            self.serve(false);
        } else if self.bx > n - 1.0 {
            self.score_opponent += 1;
            reward = -1.0;
            self.serve(true);
        }
        self.steps += 1;
        let terminated = self.score_player >= self.params.max_score
            || self.score_opponent >= self.params.max_score;
        let truncated = !terminated && self.steps >= HARD_STEP_CAP;
        self.done = terminated || truncated;
        self.push_frame()?;
        Ok(StepResult { obs: self.observe(), reward, terminated, truncated })
    }

    fn action_space(&self) -> ActionSpace {
        ActionSpace::Discrete(3)
    }

    fn env_id(&self) -> &'static str {
        "minipong"
    }

    fn variant_id(&self) -> String {
        self.variant.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corruptions::CorruptionKind;
    use crate::rng::rng_from;

    #[test]
    fn raw_frames_are_binary() {
        let mut env = MiniPong::new(MiniPongParams::default());
        env.reset(&mut rng_from(1));
        for _ in 0..50 {
            let res = env.step(&Action::Discrete(0)).unwrap();
            match res.obs {
                Observation::Frames(frames) => {
                    for f in frames {
                        assert!(f.data.iter().all(|&v| v == 0.0 || v == 1.0));
                    }
                }
                _ => panic!("expected frames"),
            }
        }
    }

    #[test]
    fn perfect_opponent_never_concedes_straight_shots() {
        // exhaustive over integer serve heights: straight (vy = 0) shots at
        // ball_speed 1 toward a skill-1 opponent must always come back
        let params = MiniPongParams {
            ball_speed: 1.0,
            opponent_skill: 1.0,
            ..MiniPongParams::default()
        };
        let n = params.frame_size as f64;
        for serve_y in 6..(params.frame_size - 6) {
            let mut env = MiniPong::new(params);
            env.reset(&mut rng_from(serve_y as u64));
            env.set_ball(n / 2.0, serve_y as f64, -1.0, 0.0);
            let mut reflected = false;
            for _ in 0..200 {
                let res = env.step(&Action::Discrete(0)).unwrap();
                assert!(res.reward <= 0.0, "player scored a straight shot at y={serve_y}");
                if env.vx > 0.0 {
                    reflected = true;
                    break;
                }
            }
            assert!(reflected, "opponent failed to return the ball at y={serve_y}");
        }
    }

    #[test]
    fn episodes_are_bit_reproducible_given_seed_and_actions() {
        let run = || {
            let mut env = MiniPong::new(MiniPongParams { max_score: 2, ..Default::default() });
            let mut rng = rng_from(77);
            let mut trace = vec![env.reset(&mut rng)];
            let mut action_rng = rng_from(5);
            loop {
                let a = Action::Discrete(action_rng.random_range(0..3));
                let res = env.step(&a).unwrap();
                let done = res.done();
                trace.push(res.obs);
                if done {
                    break;
                }
            }
            trace
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn corrupted_frames_stay_in_unit_interval() {
        let env = MiniPong::new(MiniPongParams { max_score: 1, ..Default::default() });
        let mut env = env.with_corruption(CorruptionSpec {
            kind: CorruptionKind::Gaussian { sigma: 0.38 },
            severity_label: Some(5),
        });
        assert_eq!(env.variant_id(), "gaussian/5");
        env.reset(&mut rng_from(2));
        for _ in 0..30 {
            let res = env.step(&Action::Discrete(0)).unwrap();
            if let Observation::Frames(frames) = &res.obs {
                assert!(frames
                    .iter()
                    .flat_map(|f| f.data.iter())
                    .all(|&v| (0.0..=1.0).contains(&v)));
                // gaussian noise at this severity should touch most pixels
                assert!(frames[3].data.iter().filter(|&&v| v != 0.0 && v != 1.0).count() > 100);
            }
            if res.done() {
                break;
            }
        }
    }

    #[test]
    fn terminates_at_max_score() {
        let mut env = MiniPong::new(MiniPongParams { max_score: 1, ..Default::default() });
        env.reset(&mut rng_from(3));
        let mut total = 0.0;
        loop {
            let res = env.step(&Action::Discrete(0)).unwrap();
            total += res.reward;
            if res.done() {
                assert!(res.terminated);
                break;
            }
        }
        let (sp, so) = env.scores();
        assert_eq!(sp.max(so), 1);
        assert_eq!(total, sp as f64 - so as f64);
    }
}
