//! Opinion-polarization scenario on a social platform. Agents post their
//! current belief and react to the posts of others; beliefs move through
//! interaction, feedback on one's own post, and confidence-dependent
//! sensitivity. Risk is the population variance of beliefs.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::env::Environment;
use crate::error::{Error, Result};
use crate::rng::{CrnStream, Purpose};
use crate::scenario::{check_positive, check_range};
use crate::types::{proportional_shares, AgentId, BehaviorShare, TimeStep};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReactionKind {
    Like,
    None,
    Dislike,
}

impl ReactionKind {
    fn offset(self) -> usize {
        match self {
            ReactionKind::Like => 0,
            ReactionKind::None => 1,
            ReactionKind::Dislike => 2,
        }
    }
}

/// Choice made on one viewed post.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Reaction {
    pub author: usize,
    pub kind: ReactionKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SocialAction {
    pub posts: bool,
    pub reactions: Vec<Reaction>,
}

impl SocialAction {
    /// Does not post and ignores every post.
    pub fn idle() -> Self {
        SocialAction {
            posts: false,
            reactions: Vec::new(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PostRecord {
    pub author: usize,
    pub belief: f64,
    pub views: usize,
    pub likes: usize,
    pub dislikes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SocialState {
    pub beliefs: Vec<f64>,
    pub posting: Vec<f64>,
    pub interaction: Vec<f64>,
    /// Posts made during the step that produced this state.
    pub posts: Vec<PostRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SocialParams {
    pub agents: usize,
    pub delta: f64,
    pub s_base: f64,
    pub alpha: f64,
    /// Reinforcement coefficient of the feedback rule.
    pub reinf: f64,
    pub p_base: f64,
    pub q_base: f64,
    pub beta: f64,
    pub gamma: f64,
    pub initial_beliefs: [f64; 2],
    /// Reactors like posts whose perceived distance is within this tolerance.
    pub tolerance: f64,
    pub perception_noise: f64,
    /// Event threshold. The default is what `calibrate_rho` gives under the
    /// default calibration plan.
    pub rho: f64,
}

impl Default for SocialParams {
    fn default() -> Self {
        SocialParams {
            agents: 20,
            delta: 0.15,
            s_base: 1.0,
            alpha: 0.5,
            reinf: 0.2,
            p_base: 0.3,
            q_base: 0.5,
            beta: 0.4,
            gamma: 0.3,
            initial_beliefs: [-0.3, 0.3],
            tolerance: 0.4,
            perception_noise: 0.2,
            rho: 0.0407270609033396,
        }
    }
}

impl SocialParams {
    pub fn validate(&self) -> Result<()> {
        if self.agents == 0 {
            return Err(Error::invalid("social.agents", "need at least one agent"));
        }
        for (name, v) in [
            ("social.delta", self.delta),
            ("social.s_base", self.s_base),
            ("social.alpha", self.alpha),
            ("social.reinf", self.reinf),
            ("social.beta", self.beta),
            ("social.gamma", self.gamma),
            ("social.tolerance", self.tolerance),
            ("social.perception_noise", self.perception_noise),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(name, format!("{v} must be finite and non-negative")));
            }
        }
        check_range("social.p_base", [self.p_base; 2], 0.0, 1.0)?;
        check_range("social.q_base", [self.q_base; 2], 0.0, 1.0)?;
        check_range("social.initial_beliefs", self.initial_beliefs, -1.0, 1.0)?;
        check_positive("social.rho", self.rho)?;
        Ok(())
    }
}

/// Like pulls `b_i` toward `b_p`, dislike pushes it away, both by
/// `delta * s_i * |b_p - b_i|`.
pub fn social_interaction_update(b_i: f64, b_p: f64, reaction: ReactionKind, delta: f64, s_i: f64) -> f64 {
    let step = delta * s_i * (b_p - b_i).abs();
    let up = b_p > b_i;
    let moved = match reaction {
        ReactionKind::Like if up => b_i + step,
        ReactionKind::Like => b_i - step,
        ReactionKind::Dislike if up => b_i - step,
        ReactionKind::Dislike => b_i + step,
        ReactionKind::None => b_i,
    };
    moved.clamp(-1.0, 1.0)
}

pub fn social_sensitivity(b_i: f64, s_base: f64, alpha: f64) -> f64 {
    (s_base * (1.0 - alpha * b_i.abs())).max(0.0)
}

pub fn social_feedback_update(b_i: f64, likes: usize, dislikes: usize, views: usize, reinf: f64) -> f64 {
    if views == 0 {
        return b_i;
    }
    let net = (likes as f64 - dislikes as f64) / views as f64;
    (b_i * (1.0 + net * reinf)).clamp(-1.0, 1.0)
}

/// Raw `(p_i, q_i)`; clamp to `[0, 1]` before using them as probabilities.
pub fn social_preference_update(b_i: f64, p_base: f64, q_base: f64, beta: f64, gamma: f64) -> (f64, f64) {
    (p_base + beta * b_i.abs(), q_base + gamma * b_i.abs())
}

/// Population variance of beliefs.
pub fn social_risk(beliefs: &[f64]) -> f64 {
    if beliefs.is_empty() {
        return 0.0;
    }
    let n = beliefs.len() as f64;
    let mean = beliefs.iter().sum::<f64>() / n;
    beliefs.iter().map(|b| (b - mean) * (b - mean)).sum::<f64>() / n
}

/// Classes 0-2: not posting with like / none / dislike; 3-5: posting.
/// Several reactions split the slot proportionally; no reactions counts as
/// "not interact".
pub fn social_classify_behavior(action: &SocialAction) -> Vec<BehaviorShare> {
    let base = if action.posts { 3 } else { 0 };
    if action.reactions.is_empty() {
        return vec![BehaviorShare {
            class: base + ReactionKind::None.offset(),
            weight: 1.0,
        }];
    }
    proportional_shares(action.reactions.iter().map(|r| base + r.kind.offset()))
}

#[derive(Clone, Debug)]
pub struct SocialEnv {
    params: SocialParams,
}

impl SocialEnv {
    pub fn new(params: SocialParams) -> Result<Self> {
        params.validate()?;
        Ok(SocialEnv { params })
    }

    pub fn params_ref(&self) -> &SocialParams {
        &self.params
    }

    /// Agents still post but never react, so beliefs stay put. Used for
    /// threshold calibration.
    pub fn calm(&self) -> Self {
        SocialEnv {
            params: SocialParams {
                q_base: 0.0,
                gamma: 0.0,
                ..self.params.clone()
            },
        }
    }

    pub fn initial_state(&self, beliefs: Vec<f64>) -> SocialState {
        let (posting, interaction) = self.preferences(&beliefs);
        SocialState {
            beliefs,
            posting,
            interaction,
            posts: Vec::new(),
        }
    }

    fn preferences(&self, beliefs: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let p = &self.params;
        beliefs
            .iter()
            .map(|&b| social_preference_update(b, p.p_base, p.q_base, p.beta, p.gamma))
            .unzip()
    }

    /// Whether agent `i` posts at `step`, reproducible by every other agent.
    fn posts(&self, i: usize, state: &SocialState, step: TimeStep, crn: &CrnStream) -> bool {
        let u: f64 = crn.rng(step.get() as u64, i as u64, Purpose::Posting).random();
        u < state.posting[i].clamp(0.0, 1.0)
    }
}

impl Environment for SocialEnv {
    type State = SocialState;
    type Action = SocialAction;

    fn scenario(&self) -> &'static str {
        "social"
    }

    fn agent_count(&self) -> usize {
        self.params.agents
    }

    fn behavior_count(&self) -> usize {
        6
    }

    fn params(&self) -> serde_json::Value {
        serde_json::to_value(&self.params).expect("params serialize")
    }

    fn reset(&self, crn: &CrnStream) -> SocialState {
        let [lo, hi] = self.params.initial_beliefs;
        let beliefs = (0..self.params.agents)
            .map(|i| {
                if hi > lo {
                    crn.rng(0, i as u64, Purpose::InitialState).random_range(lo..=hi)
                } else {
                    lo
                }
            })
            .collect();
        self.initial_state(beliefs)
    }

    fn policy(&self, agent: AgentId, state: &SocialState, step: TimeStep, crn: &CrnStream) -> SocialAction {
        let p = &self.params;
        let i = agent.0;
        let b_i = state.beliefs[i];
        let mut rng = crn.rng(step.get() as u64, i as u64, Purpose::Reaction);
        let q = state.interaction[i].clamp(0.0, 1.0);
        let mut reactions = Vec::new();
        for j in (0..p.agents).filter(|&j| j != i) {
            if !self.posts(j, state, step, crn) {
                continue;
            }
            let engage: f64 = rng.random();
            let z: f64 = rng.sample(StandardNormal);
            let kind = if engage >= q {
                ReactionKind::None
            } else if (state.beliefs[j] - b_i).abs() + p.perception_noise * z <= p.tolerance {
                ReactionKind::Like
            } else {
                ReactionKind::Dislike
            };
            reactions.push(Reaction { author: j, kind });
        }
        SocialAction {
            posts: self.posts(i, state, step, crn),
            reactions,
        }
    }

    fn reconcile(&self, _state: &SocialState, actions: &mut [SocialAction]) {
        let posting: Vec<bool> = actions.iter().map(|a| a.posts).collect();
        for (i, a) in actions.iter_mut().enumerate() {
            a.reactions
                .retain(|r| r.author != i && posting.get(r.author).copied().unwrap_or(false));
        }
    }

    fn transition(&self, state: &SocialState, actions: &[&SocialAction], _step: TimeStep, _crn: &CrnStream) -> SocialState {
        social_transition(&self.params, state, actions)
    }

    fn risk(&self, prefix: &[SocialState]) -> f64 {
        prefix.last().map_or(0.0, |s| social_risk(&s.beliefs))
    }

    fn baseline_action(&self, _agent: AgentId, _step: TimeStep) -> SocialAction {
        SocialAction::idle()
    }

    fn classify_behavior(&self, action: &SocialAction) -> Vec<BehaviorShare> {
        social_classify_behavior(action)
    }

    fn behavior_labels(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(6);
        for post in ["no post", "post"] {
            for r in ["like", "no reaction", "dislike"] {
                out.push(format!("{post}, {r}"));
            }
        }
        out
    }

    fn is_valid_action(&self, action: &SocialAction) -> bool {
        action.reactions.iter().all(|r| r.author < self.params.agents)
    }

    fn observation(&self, agent: AgentId, state: &SocialState) -> serde_json::Value {
        serde_json::json!({
            "belief": state.beliefs[agent.0],
            "posting_preference": state.posting[agent.0],
            "interaction_preference": state.interaction[agent.0],
            "beliefs": state.beliefs,
        })
    }

    fn action_summary(&self, a: &SocialAction) -> String {
        let count = |k| a.reactions.iter().filter(|r| r.kind == k).count();
        format!(
            "{}; likes={} dislikes={} ignored={}",
            if a.posts { "post" } else { "no post" },
            count(ReactionKind::Like),
            count(ReactionKind::Dislike),
            count(ReactionKind::None)
        )
    }
}

/// One step: posts carry the authors' start-of-step beliefs; every other
/// agent views every post; interaction updates run in agent order with the
/// running belief; authors then get feedback; preferences follow the final
/// beliefs. Reactions to posts that were not made are ignored.
pub fn social_transition(params: &SocialParams, state: &SocialState, actions: &[&SocialAction]) -> SocialState {
    let n = state.beliefs.len();
    let mut posts: Vec<PostRecord> = Vec::new();
    let mut post_of = vec![None; n];
    for (i, a) in actions.iter().enumerate() {
        if a.posts {
            post_of[i] = Some(posts.len());
            posts.push(PostRecord {
                author: i,
                belief: state.beliefs[i],
                views: n - 1,
                likes: 0,
                dislikes: 0,
            });
        }
    }
    let mut beliefs = state.beliefs.clone();
    for (i, a) in actions.iter().enumerate() {
        for r in &a.reactions {
            let Some(k) = post_of.get(r.author).copied().flatten() else {
                continue;
            };
            if r.author == i {
                continue;
            }
            match r.kind {
                ReactionKind::Like => posts[k].likes += 1,
                ReactionKind::Dislike => posts[k].dislikes += 1,
                ReactionKind::None => continue,
            }
            let s_i = social_sensitivity(beliefs[i], params.s_base, params.alpha);
            beliefs[i] = social_interaction_update(beliefs[i], posts[k].belief, r.kind, params.delta, s_i);
        }
    }
    for post in &posts {
        let b = &mut beliefs[post.author];
        *b = social_feedback_update(*b, post.likes, post.dislikes, post.views, params.reinf);
    }
    let (posting, interaction) = beliefs
        .iter()
        .map(|&b| social_preference_update(b, params.p_base, params.q_base, params.beta, params.gamma))
        .unzip();
    SocialState {
        beliefs,
        posting,
        interaction,
        posts,
    }
}
