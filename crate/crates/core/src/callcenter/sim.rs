//! Entity dynamics of one replication, advanced one epoch at a time.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use super::{ActionVector, CallCenterConfig, EpochKpis};
use crate::descore::{EventCalendar, EventKind};
use crate::env::EnvError;
use crate::stochastic::{sample_arrivals, RngStream};
use crate::ConfigError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CustomerStatus {
    Waiting,
    InService,
    Served,
    Abandoned,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Customer {
    pub contact_group: usize,
    pub arrival_time: f64,
    pub patience: f64,
    pub service_demand: f64,
    pub status: CustomerStatus,
    /// Service start or abandonment time.
    pub wait_ended_at: Option<f64>,
    abandonment_seq: Option<u64>,
}

impl Customer {
    pub fn wait(&self) -> Option<f64> {
        self.wait_ended_at.map(|t| t - self.arrival_time)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExpertMode {
    FrontOffice,
    BackOffice,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Work {
    Idle,
    Serving { customer: usize, since: f64 },
    Task { since: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Expert {
    pub id: usize,
    pub group: usize,
    pub mode: ExpertMode,
    pub work: Work,
    pub remaining_tasks: u32,
    pub busy_time_this_epoch: f64,
}

impl Expert {
    pub fn is_busy(&self) -> bool {
        !matches!(self.work, Work::Idle)
    }
}

/// Running totals for the epoch in progress.
#[derive(Debug, Clone, Default)]
struct EpochTally {
    wait_sum: Vec<f64>,
    ended: Vec<u32>,
    abandoned: Vec<u32>,
}

/// Full system state at an epoch boundary. Work in progress lives on the
/// calendar and carries across boundaries.
#[derive(Debug, Clone)]
pub struct SystemState {
    epoch_index: usize,
    queues: Vec<VecDeque<usize>>,
    customers: Vec<Customer>,
    experts: Vec<Expert>,
    calendar: EventCalendar,
    arrivals: Vec<u64>,
    tally: EpochTally,
}

/// Everything that can go wrong in the entity logic.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Conservation { contact_group: usize },
    AbandonmentNotAtPatience { customer: usize },
    ServedAfterPatience { customer: usize },
    FifoBroken { contact_group: usize },
    UtilizationOutOfRange { group: usize, value: f64 },
    TasksIncreased { expert: usize },
}

impl SystemState {
    /// Epoch 0, empty queues, idle experts holding their full task piles.
    pub fn new(config: &CallCenterConfig) -> Result<Self, ConfigError> {
        config.validate()?;
        let experts = config
            .expert_group_of()
            .into_iter()
            .enumerate()
            .map(|(id, group)| Expert {
                id,
                group,
                mode: ExpertMode::FrontOffice,
                work: Work::Idle,
                remaining_tasks: config.backoffice_tasks_per_expert,
                busy_time_this_epoch: 0.0,
            })
            .collect();
        let n = config.num_contact_groups();
        Ok(Self {
            epoch_index: 0,
            queues: vec![VecDeque::new(); n],
            customers: Vec::new(),
            experts,
            calendar: EventCalendar::new(),
            arrivals: vec![0; n],
            tally: EpochTally::default(),
        })
    }

    pub fn epoch_index(&self) -> usize {
        self.epoch_index
    }

    pub fn queue_len(&self, contact_group: usize) -> usize {
        self.queues[contact_group].len()
    }

    pub fn experts(&self) -> &[Expert] {
        &self.experts
    }

    pub fn customers(&self) -> &[Customer] {
        &self.customers
    }

    pub fn clock(&self) -> f64 {
        self.calendar.clock()
    }

    /// Remaining back-office tasks summed per expert group.
    pub fn backlog(&self, expert_groups: usize) -> Vec<u32> {
        let mut b = vec![0; expert_groups];
        for e in &self.experts {
            b[e.group] += e.remaining_tasks;
        }
        b
    }

    pub fn busy_count(&self) -> usize {
        self.experts.iter().filter(|e| e.is_busy()).count()
    }

    /// Queue lengths, per-group backlog, busy count, `j / T`.
    pub fn observation(&self, config: &CallCenterConfig) -> Vec<f64> {
        let mut obs: Vec<f64> = self.queues.iter().map(|q| q.len() as f64).collect();
        obs.extend(self.backlog(config.num_expert_groups()).into_iter().map(f64::from));
        obs.push(self.busy_count() as f64);
        obs.push(self.epoch_index as f64 / config.horizon_epochs as f64);
        obs
    }

    /// Samples both groups' arrivals for the epoch and advances one epoch.
    /// Returns the epoch's KPIs and the arrival count per contact group.
    pub fn step_epoch(
        &mut self,
        config: &CallCenterConfig,
        action: &ActionVector,
        stream: &mut RngStream,
    ) -> Result<(EpochKpis, Vec<u32>), EnvError> {
        if self.epoch_index >= config.horizon_epochs {
            return Err(EnvError::EpisodeComplete);
        }
        let arrivals: Vec<Vec<f64>> = config
            .contact_groups
            .iter()
            .map(|c| sample_arrivals(stream, c.arrival_rate_per_epoch, config.epoch_length_minutes))
            .collect();
        let counts = arrivals.iter().map(|a| a.len() as u32).collect();
        let kpis = self.step_epoch_with_arrivals(config, action, &arrivals, stream)?;
        Ok((kpis, counts))
    }

    /// Advances one epoch with the arrival offsets (minutes after the epoch
    /// start, one list per contact group) supplied by the caller.
    pub fn step_epoch_with_arrivals(
        &mut self,
        config: &CallCenterConfig,
        action: &ActionVector,
        arrivals: &[Vec<f64>],
        stream: &mut RngStream,
    ) -> Result<EpochKpis, EnvError> {
        if self.epoch_index >= config.horizon_epochs {
            return Err(EnvError::EpisodeComplete);
        }
        if action.len() != self.experts.len() {
            return Err(EnvError::InvalidAction(action.len()));
        }
        let length = config.epoch_length_minutes;
        let start = self.epoch_index as f64 * length;
        let end = start + length;
        let groups = config.num_contact_groups();
        self.tally = EpochTally {
            wait_sum: vec![0.0; groups],
            ended: vec![0; groups],
            abandoned: vec![0; groups],
        };

        for (expert, back_office) in self.experts.iter_mut().zip(action.iter()) {
            expert.mode = if back_office { ExpertMode::BackOffice } else { ExpertMode::FrontOffice };
            expert.busy_time_this_epoch = 0.0;
        }
        for (g, offsets) in arrivals.iter().enumerate() {
            for &dt in offsets {
                self.calendar.schedule(start + dt, EventKind::Arrival { contact_group: g })?;
            }
        }
        self.calendar.schedule(end, EventKind::EpochBoundary)?;
        for e in 0..self.experts.len() {
            if !self.experts[e].is_busy() {
                self.dispatch(config, e, start, end, stream)?;
            }
        }

        while let Some(ev) = self.calendar.pop_next() {
            let now = ev.time;
            match ev.kind {
                EventKind::EpochBoundary => break,
                EventKind::Arrival { contact_group } => {
                    self.arrive(config, contact_group, now, stream)?;
                }
                EventKind::ServiceCompletion { expert } => {
                    if let Work::Serving { customer, since } = self.experts[expert].work {
                        self.customers[customer].status = CustomerStatus::Served;
                        self.release(expert, since, start, now);
                    }
                    self.dispatch(config, expert, now, end, stream)?;
                }
                EventKind::BackofficeCompletion { expert } => {
                    if let Work::Task { since } = self.experts[expert].work {
                        self.experts[expert].remaining_tasks -= 1;
                        self.release(expert, since, start, now);
                    }
                    self.dispatch(config, expert, now, end, stream)?;
                }
                EventKind::Abandonment { customer } => self.abandon(customer, now),
            }
        }

        for expert in &mut self.experts {
            match expert.work {
                Work::Serving { since, .. } | Work::Task { since } => {
                    expert.busy_time_this_epoch += end - since.max(start);
                }
                Work::Idle => {}
            }
        }
        self.epoch_index += 1;
        Ok(self.kpis(config))
    }

    fn kpis(&self, config: &CallCenterConfig) -> EpochKpis {
        let t = &self.tally;
        let waiting = t
            .wait_sum
            .iter()
            .zip(&t.ended)
            .map(|(&s, &n)| if n == 0 { 0.0 } else { s / n as f64 })
            .collect();
        let abandonment = t
            .abandoned
            .iter()
            .zip(&t.ended)
            .map(|(&a, &n)| if n == 0 { 0.0 } else { a as f64 / n as f64 })
            .collect();
        let mut busy = vec![0.0; config.num_expert_groups()];
        for e in &self.experts {
            busy[e.group] += e.busy_time_this_epoch;
        }
        let utilization = busy
            .iter()
            .zip(&config.expert_groups)
            .map(|(&b, g)| (b / (config.epoch_length_minutes * g.size as f64)).clamp(0.0, 1.0))
            .collect();
        EpochKpis {
            waiting,
            abandonment,
            utilization,
            backoffice: self.backlog(config.num_expert_groups()),
        }
    }

    fn release(&mut self, expert: usize, since: f64, epoch_start: f64, now: f64) {
        let e = &mut self.experts[expert];
        e.busy_time_this_epoch += now - since.max(epoch_start);
        e.work = Work::Idle;
    }

    fn arrive(
        &mut self,
        config: &CallCenterConfig,
        group: usize,
        now: f64,
        stream: &mut RngStream,
    ) -> Result<(), EnvError> {
        let spec = &config.contact_groups[group];
        let patience = spec.patience.sample(stream);
        let service_demand = spec.service.sample(stream);
        let id = self.customers.len();
        self.arrivals[group] += 1;
        self.customers.push(Customer {
            contact_group: group,
            arrival_time: now,
            patience,
            service_demand,
            status: CustomerStatus::Waiting,
            wait_ended_at: None,
            abandonment_seq: None,
        });
        let server = self.experts.iter().position(|e| {
            e.mode == ExpertMode::FrontOffice && !e.is_busy() && config.routing[e.group][group]
        });
        match server {
            Some(e) => self.start_service(e, id, now)?,
            None => {
                let seq = self
                    .calendar
                    .schedule(now + patience, EventKind::Abandonment { customer: id })?;
                self.customers[id].abandonment_seq = Some(seq);
                self.queues[group].push_back(id);
            }
        }
        Ok(())
    }

    fn abandon(&mut self, customer: usize, now: f64) {
        let c = &mut self.customers[customer];
        if c.status != CustomerStatus::Waiting {
            return;
        }
        c.status = CustomerStatus::Abandoned;
        c.wait_ended_at = Some(now);
        c.abandonment_seq = None;
        let g = c.contact_group;
        let patience = c.patience;
        self.queues[g].retain(|&id| id != customer);
        self.tally.wait_sum[g] += patience;
        self.tally.ended[g] += 1;
        self.tally.abandoned[g] += 1;
    }

    /// Gives an idle expert its next piece of work, if any.
    fn dispatch(
        &mut self,
        config: &CallCenterConfig,
        expert: usize,
        now: f64,
        epoch_end: f64,
        stream: &mut RngStream,
    ) -> Result<(), EnvError> {
        let e = &self.experts[expert];
        match e.mode {
            ExpertMode::FrontOffice => {
                // Longest-waiting eligible customer; queue heads are the
                // oldest of each group.
                let routing = &config.routing[e.group];
                let next = self
                    .queues
                    .iter()
                    .enumerate()
                    .filter(|(g, _)| routing[*g])
                    .filter_map(|(g, q)| q.front().map(|&c| (g, c)))
                    .min_by(|a, b| {
                        let ta = self.customers[a.1].arrival_time;
                        let tb = self.customers[b.1].arrival_time;
                        ta.total_cmp(&tb).then(a.0.cmp(&b.0))
                    });
                if let Some((g, c)) = next {
                    self.queues[g].pop_front();
                    if let Some(seq) = self.customers[c].abandonment_seq.take() {
                        self.calendar.cancel_seq(seq);
                    }
                    self.start_service(expert, c, now)?;
                }
            }
            ExpertMode::BackOffice => {
                if e.remaining_tasks > 0 && now < epoch_end {
                    let duration = config.backoffice_duration.sample(stream);
                    self.calendar
                        .schedule(now + duration, EventKind::BackofficeCompletion { expert })?;
                    self.experts[expert].work = Work::Task { since: now };
                }
            }
        }
        Ok(())
    }

    fn start_service(&mut self, expert: usize, customer: usize, now: f64) -> Result<(), EnvError> {
        let c = &mut self.customers[customer];
        c.status = CustomerStatus::InService;
        c.wait_ended_at = Some(now);
        let g = c.contact_group;
        self.tally.wait_sum[g] += now - c.arrival_time;
        self.tally.ended[g] += 1;
        let done_at = now + c.service_demand;
        self.calendar
            .schedule(done_at, EventKind::ServiceCompletion { expert })?;
        self.experts[expert].work = Work::Serving { customer, since: now };
        Ok(())
    }

    /// Checks the entity-level invariants that must hold at any boundary.
    pub fn audit(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        for g in 0..self.queues.len() {
            let mut counts = [0u64; 4];
            let mut last_start = f64::NEG_INFINITY;
            for c in self.customers.iter().filter(|c| c.contact_group == g) {
                counts[c.status as usize] += 1;
                if matches!(c.status, CustomerStatus::InService | CustomerStatus::Served) {
                    let started = c.wait_ended_at.unwrap_or(f64::NAN);
                    if !(started >= last_start) {
                        out.push(Violation::FifoBroken { contact_group: g });
                    }
                    last_start = started;
                }
            }
            let waiting = self.queues[g].len() as u64;
            let in_service = self
                .experts
                .iter()
                .filter(|e| matches!(e.work, Work::Serving { customer, .. } if self.customers[customer].contact_group == g))
                .count() as u64;
            let consistent = counts[CustomerStatus::Waiting as usize] == waiting
                && counts[CustomerStatus::InService as usize] == in_service
                && self.arrivals[g] == counts.iter().sum::<u64>();
            if !consistent {
                out.push(Violation::Conservation { contact_group: g });
            }
        }
        for (i, c) in self.customers.iter().enumerate() {
            match (c.status, c.wait_ended_at) {
                (CustomerStatus::Abandoned, Some(t)) if t != c.arrival_time + c.patience => {
                    out.push(Violation::AbandonmentNotAtPatience { customer: i });
                }
                (CustomerStatus::InService | CustomerStatus::Served, Some(t)) if t > c.arrival_time + c.patience => {
                    out.push(Violation::ServedAfterPatience { customer: i });
                }
                (CustomerStatus::Waiting, None) => {}
                (_, None) => out.push(Violation::Conservation { contact_group: c.contact_group }),
                _ => {}
            }
        }
        out
    }

    /// Arrivals so far per contact group.
    pub fn arrivals(&self) -> &[u64] {
        &self.arrivals
    }
}
