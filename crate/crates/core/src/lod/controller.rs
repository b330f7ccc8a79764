use serde::{Deserialize, Serialize};

use super::FrameBudget;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControllerConfig {
    pub floor: u64,
    pub ceiling: u64,
    /// Consecutive over-target frames before a decrease.
    pub decrease_after: u32,
    pub decrease_factor: f64,
    /// Consecutive under-threshold frames before an increase.
    pub increase_after: u32,
    /// Increase step as a fraction of the current budget.
    pub increase_step: f64,
    /// Frames below `increase_below × target` count toward an increase.
    pub increase_below: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            floor: 1_000,
            ceiling: 2_000_000,
            decrease_after: 3,
            decrease_factor: 0.8,
            increase_after: 30,
            increase_step: 0.05,
            increase_below: 0.9,
        }
    }
}

/// Adjusts the primitive budget from measured frame times: multiplicative
/// decrease on sustained overload, small increases on sustained headroom.
/// Any frame that breaks a streak resets it, and every adjustment resets both.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BudgetController {
    pub config: ControllerConfig,
    over: u32,
    under: u32,
}

impl BudgetController {
    pub fn new(config: ControllerConfig) -> Self {
        Self {
            config,
            over: 0,
            under: 0,
        }
    }

    pub fn update(&mut self, budget: &FrameBudget, measured_frame_ns: u64) -> FrameBudget {
        let c = &self.config;
        let target = budget.target_frame_ns as f64;
        let measured = measured_frame_ns as f64;
        let mut next = *budget;
        if measured > target {
            self.over += 1;
            self.under = 0;
        } else if measured < c.increase_below * target {
            self.under += 1;
            self.over = 0;
        } else {
            self.over = 0;
            self.under = 0;
        }
        if self.over >= c.decrease_after {
            let reduced = (budget.primitive_budget as f64 * c.decrease_factor).floor() as u64;
            next.primitive_budget = reduced.clamp(c.floor, c.ceiling);
            self.over = 0;
        } else if self.under >= c.increase_after {
            let step = ((budget.primitive_budget as f64 * c.increase_step).ceil() as u64).max(1);
            next.primitive_budget = budget.primitive_budget.saturating_add(step).clamp(c.floor, c.ceiling);
            self.under = 0;
        }
        next
    }
}

impl Default for BudgetController {
    fn default() -> Self {
        Self::new(ControllerConfig::default())
    }
}

/// Least-squares fit of `measured ≈ a·points + b·lines` (no intercept).
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CostCalibrator {
    spp: f64,
    spl: f64,
    sll: f64,
    spm: f64,
    slm: f64,
    samples: usize,
}

impl CostCalibrator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, points: u64, lines: u64, measured_ns: u64) {
        let (p, l, m) = (points as f64, lines as f64, measured_ns as f64);
        self.spp += p * p;
        self.spl += p * l;
        self.sll += l * l;
        self.spm += p * m;
        self.slm += l * m;
        self.samples += 1;
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    /// Fitted `(ns_per_point, ns_per_line)`, or `None` while the samples do not
    /// determine both or a coefficient comes out non-positive.
    pub fn fit(&self) -> Option<(f64, f64)> {
        let det = self.spp * self.sll - self.spl * self.spl;
        if det.abs() <= 1e-12 * (self.spp * self.sll).max(1.0) {
            return None;
        }
        let a = (self.spm * self.sll - self.slm * self.spl) / det;
        let b = (self.spp * self.slm - self.spl * self.spm) / det;
        (a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()).then_some((a, b))
    }

    /// Copies fitted coefficients into `budget` when available.
    pub fn apply(&self, budget: &mut FrameBudget) -> bool {
        match self.fit() {
            Some((a, b)) => {
                budget.ns_per_point = a;
                budget.ns_per_line = b;
                true
            }
            None => false,
        }
    }
}
