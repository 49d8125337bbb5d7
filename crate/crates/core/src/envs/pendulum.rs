use rand::Rng as _;

use super::{Action, ActionSpace, Environment, Observation, StepResult};
use crate::rng::Rng;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PendulumParams {
    pub gravity: f64,
    pub mass: f64,
    pub length: f64,
    pub max_speed: f64,
    pub max_torque: f64,
    pub dt: f64,
}

impl Default for PendulumParams {
    fn default() -> Self {
        Self { gravity: 10.0, mass: 1.0, length: 1.0, max_speed: 8.0, max_torque: 2.0, dt: 0.05 }
    }
}

impl PendulumParams {
    pub fn validate(&self) -> Result<()> {
        let vals =
            [self.gravity, self.mass, self.length, self.max_speed, self.max_torque, self.dt];
        if vals.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::Config("pendulum parameters must be strictly positive".into()));
        }
        Ok(())
    }
}

const MAX_STEPS: usize = 200;

/// Wrap an angle into [-pi, pi].
pub fn wrap_angle(theta: f64) -> f64 {
    use std::f64::consts::PI;
    (theta + PI).rem_euclid(2.0 * PI) - PI
}

#[derive(Debug, Clone)]
pub struct Pendulum {
    pub params: PendulumParams,
    pub(crate) variant: String,
    theta: f64,
    theta_dot: f64,
    steps: usize,
}

impl Pendulum {
    pub fn new(params: PendulumParams) -> Self {
        Self { params, variant: "default".into(), theta: 0.0, theta_dot: 0.0, steps: 0 }
    }

    pub fn state(&self) -> (f64, f64) {
        (self.theta, self.theta_dot)
    }

    fn observe(&self) -> Observation {
        Observation::Vector(vec![self.theta.cos(), self.theta.sin(), self.theta_dot])
    }

    /// Set the physical state directly (diagnostics and dynamics checks).
    pub fn set_state(&mut self, theta: f64, theta_dot: f64) {
        self.theta = theta;
        self.theta_dot = theta_dot;
        self.steps = 0;
    }
}

impl Environment for Pendulum {
    fn reset(&mut self, rng: &mut Rng) -> Observation {
        use std::f64::consts::PI;
        self.theta = rng.random::<f64>() * 2.0 * PI - PI;
        self.theta_dot = rng.random::<f64>() * 2.0 - 1.0;
        self.steps = 0;
        self.observe()
    }

    /// Velocity-then-position Euler update. Reward is computed from the
    /// pre-update state and the clamped torque; episodes truncate at 200
    /// steps and never terminate.
    fn step(&mut self, action: &Action) -> Result<StepResult> {
        let torque = match action {
            Action::Continuous(u) => *u,
            other => return Err(Error::Usage(format!("invalid pendulum action {other:?}"))),
        };
        let p = &self.params;
        let u = torque.clamp(-p.max_torque, p.max_torque);
        let angle = wrap_angle(self.theta);
        let reward = -(angle * angle + 0.1 * self.theta_dot * self.theta_dot + 0.001 * u * u);
        let accel = 3.0 * p.gravity / (2.0 * p.length) * self.theta.sin()
            + 3.0 * u / (p.mass * p.length * p.length);
        self.theta_dot = (self.theta_dot + accel * p.dt).clamp(-p.max_speed, p.max_speed);
        self.theta += self.theta_dot * p.dt;
        self.steps += 1;
        Ok(StepResult {
            obs: self.observe(),
            reward,
            terminated: false,
            truncated: self.steps >= MAX_STEPS,
        })
    }

    fn action_space(&self) -> ActionSpace {
        ActionSpace::Continuous { low: -self.params.max_torque, high: self.params.max_torque }
    }

    fn env_id(&self) -> &'static str {
        "pendulum"
    }

    fn variant_id(&self) -> String {
        self.variant.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from;
    use std::f64::consts::PI;

    #[test]
    fn upright_equilibrium_is_a_fixed_point() {
        let mut env = Pendulum::new(PendulumParams::default());
        env.set_state(0.0, 0.0);
        let res = env.step(&Action::Continuous(0.0)).unwrap();
        assert_eq!(env.state(), (0.0, 0.0));
        assert_eq!(res.reward, 0.0);
    }

    #[test]
    fn hanging_state_reward_is_minus_pi_squared() {
        let mut env = Pendulum::new(PendulumParams::default());
        env.set_state(PI, 0.0);
        let res = env.step(&Action::Continuous(0.0)).unwrap();
        assert!((res.reward - (-PI * PI)).abs() < 1e-9);
        // sin(pi) is ~1e-16, so the state is unchanged to numerical precision
        let (theta, theta_dot) = env.state();
        assert!((theta - PI).abs() < 1e-12);
        assert!(theta_dot.abs() < 1e-12);
    }

    #[test]
    fn torque_is_clamped() {
        let mut a = Pendulum::new(PendulumParams::default());
        let mut b = Pendulum::new(PendulumParams::default());
        a.set_state(1.0, 0.5);
        b.set_state(1.0, 0.5);
        let ra = a.step(&Action::Continuous(100.0)).unwrap();
        let rb = b.step(&Action::Continuous(2.0)).unwrap();
        assert_eq!(a.state(), b.state());
        assert_eq!(ra.reward, rb.reward);
    }

    #[test]
    fn speed_stays_bounded_for_any_input() {
        let p = PendulumParams::default();
        let mut env = Pendulum::new(p);
        let mut rng = rng_from(5);
        env.reset(&mut rng);
        for _ in 0..1000 {
            let u = rng.random::<f64>() * 200.0 - 100.0;
            let res = env.step(&Action::Continuous(u)).unwrap();
            assert!(env.state().1.abs() <= p.max_speed);
            if res.truncated {
                env.reset(&mut rng);
            }
        }
    }

    #[test]
    fn truncates_at_200_and_never_terminates() {
        let mut env = Pendulum::new(PendulumParams::default());
        env.reset(&mut rng_from(0));
        for i in 0..MAX_STEPS {
            let res = env.step(&Action::Continuous(0.0)).unwrap();
            assert!(!res.terminated);
            assert_eq!(res.truncated, i + 1 == MAX_STEPS);
        }
    }

    #[test]
    fn reset_ranges() {
        let mut env = Pendulum::new(PendulumParams::default());
        let mut rng = rng_from(9);
        for _ in 0..10_000 {
            env.reset(&mut rng);
            let (theta, theta_dot) = env.state();
            assert!((-PI..=PI).contains(&theta));
            assert!((-1.0..=1.0).contains(&theta_dot));
        }
    }

    #[test]
    fn wrap_angle_range() {
        for &x in &[0.0, 3.0, -3.0, 10.0, -10.0, 100.0, PI, -PI] {
            let w = wrap_angle(x);
            assert!((-PI..=PI).contains(&w), "wrap({x}) = {w}");
            // same angle modulo 2 pi
            assert!(((x - w) / (2.0 * PI)).round() * 2.0 * PI - (x - w) < 1e-9);
        }
    }
}
