"""Augmented DDPG trading agent and the GRU policy-gradient signal agent."""
from __future__ import annotations

import copy
import math
from collections import deque
from dataclasses import asdict, dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .env import Signal
from .portfolio import AccountingError


@dataclass(frozen=True)
class Hyperparams:
    episodes: int = 50
    gamma: float = 0.99
    tau: float = 0.01
    batch_size: int = 64
    buffer_capacity: int = 10_000
    noise_start: float = 0.3
    noise_end: float = 0.01
    lr_actor: float = 1e-4
    lr_critic: float = 1e-3
    lr_policy: float = 1e-4
    pg_gamma: float = 0.99
    standardize_psi: bool = False
    shared_encoder: bool = True
    conv1_maps: int = 16
    conv2_maps: int = 32
    hidden: int = 64
    gru_hidden: int = 64

    def __post_init__(self):
        if not 0 <= self.gamma <= 1:
            raise ValueError("gamma must lie in [0, 1]")
        if not 0 < self.tau <= 1:
            raise ValueError("tau must lie in (0, 1]")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")

    def noise_scale(self, episode):
        if self.episodes <= 1:
            return self.noise_start
        frac = episode / (self.episodes - 1)
        return self.noise_start + (self.noise_end - self.noise_start) * frac


def _param(rng, shape, fan_in, fan_out, name):
    return Tensor(ad.glorot_uniform(rng, shape, fan_in, fan_out), requires_grad=True, name=name)


def _zeros(shape, name):
    return Tensor(np.zeros(shape), requires_grad=True, name=name)


class Module:
    """Named parameter container."""

    def __init__(self):
        self.params = {}

    def named_parameters(self, prefix=""):
        return {f"{prefix}{k}": v for k, v in self.params.items()}

    def parameters(self):
        return list(self.params.values())


class ConvEncoder(Module):
    """Two asset-preserving 1x2 convolutions over the (m+1) x T return window."""

    def __init__(self, rng, n_rows, window, maps1=16, maps2=32):
        super().__init__()
        if window < 3:
            raise ValueError("conv encoder needs a window of at least 3 days")
        self.params = {
            "conv1.w": _param(rng, (maps1, 1, 1, 2), 2, maps1 * 2, "conv1.w"),
            "conv1.b": _zeros((maps1,), "conv1.b"),
            "conv2.w": _param(rng, (maps2, maps1, 1, 2), maps1 * 2, maps2 * 2, "conv2.w"),
            "conv2.b": _zeros((maps2,), "conv2.b"),
        }
        self.out_features = maps2 * n_rows * (window - 2)

    def __call__(self, states, p=None):
        p = p or self.params
        x = Tensor(np.asarray(states)[:, None, :, :])
        x = ad.relu(ad.conv2d(x, p["conv1.w"], p["conv1.b"]))
        x = ad.relu(ad.conv2d(x, p["conv2.w"], p["conv2.b"]))
        return ad.reshape(x, (x.shape[0], -1))


class ActorDecoder(Module):
    def __init__(self, rng, in_features, n_out, hidden=64):
        super().__init__()
        self.params = {
            "fc1.w": _param(rng, (in_features, hidden), in_features, hidden, "fc1.w"),
            "fc1.b": _zeros((hidden,), "fc1.b"),
            "fc2.w": _param(rng, (hidden, n_out), hidden, n_out, "fc2.w"),
            "fc2.b": _zeros((n_out,), "fc2.b"),
        }

    def logits(self, feats, p=None):
        p = p or self.params
        h = ad.relu(ad.linear(feats, p["fc1.w"], p["fc1.b"]))
        return ad.linear(h, p["fc2.w"], p["fc2.b"])

    def __call__(self, feats, noise=None, p=None):
        z = self.logits(feats, p)
        if noise is not None:
            z = ad.add(z, noise)
        return ad.softmax(z)


class CriticDecoder(Module):
    """State branch and action branch merged into a scalar Q."""

    def __init__(self, rng, in_features, n_actions, hidden=64):
        super().__init__()
        self.params = {
            "state.w": _param(rng, (in_features, hidden), in_features, hidden, "state.w"),
            "state.b": _zeros((hidden,), "state.b"),
            "action.w": _param(rng, (n_actions, hidden), n_actions, hidden, "action.w"),
            "action.b": _zeros((hidden,), "action.b"),
            "out.w": _param(rng, (hidden, 1), hidden, 1, "out.w"),
            "out.b": _zeros((1,), "out.b"),
        }

    def __call__(self, feats, actions, p=None):
        p = p or self.params
        hs = ad.linear(feats, p["state.w"], p["state.b"])
        ha = ad.linear(actions, p["action.w"], p["action.b"])
        q = ad.linear(ad.relu(ad.add(hs, ha)), p["out.w"], p["out.b"])
        return ad.reshape(q, (q.shape[0],))


class ActorCriticNet:
    """Actor and critic sharing one conv encoder (or owning one each)."""

    def __init__(self, rng, n_assets, window, hyper=Hyperparams()):
        n = n_assets + 1
        self.n_assets, self.window, self.shared = n_assets, window, hyper.shared_encoder
        self.actor_encoder = ConvEncoder(rng, n, window, hyper.conv1_maps, hyper.conv2_maps)
        self.critic_encoder = (self.actor_encoder if self.shared else
                               ConvEncoder(rng, n, window, hyper.conv1_maps, hyper.conv2_maps))
        f = self.actor_encoder.out_features
        self.actor = ActorDecoder(rng, f, n, hyper.hidden)
        self.critic = CriticDecoder(rng, f, n, hyper.hidden)

    def named_parameters(self):
        out = {}
        if self.shared:
            out.update(self.actor_encoder.named_parameters("encoder."))
        else:
            out.update(self.actor_encoder.named_parameters("actor_encoder."))
            out.update(self.critic_encoder.named_parameters("critic_encoder."))
        out.update(self.actor.named_parameters("actor."))
        out.update(self.critic.named_parameters("critic."))
        return out

    def actor_parameters(self):
        return self.actor_encoder.parameters() + self.actor.parameters()

    def critic_parameters(self):
        return self.critic_encoder.parameters() + self.critic.parameters()

    def encoder_parameters(self):
        ps = self.actor_encoder.parameters()
        return ps if self.shared else ps + self.critic_encoder.parameters()

    def policy(self, states, noise=None):
        return self.actor(self.actor_encoder(states), noise)

    def q_value(self, states, actions):
        return self.critic(self.critic_encoder(states), Tensor(actions))


class PolicyNet(Module):
    """GRU over the T return columns, two dense layers, softmax over (bullish, bearish)."""

    def __init__(self, rng, n_assets, hidden=64, dense=32):
        super().__init__()
        n = n_assets + 1
        H = hidden
        self.hidden = H
        self.params = {
            "gru.w_ih": _param(rng, (n, 3 * H), n, 3 * H, "gru.w_ih"),
            "gru.w_hh": _param(rng, (H, 3 * H), H, 3 * H, "gru.w_hh"),
            "gru.b_ih": _zeros((3 * H,), "gru.b_ih"),
            "gru.b_hh": _zeros((3 * H,), "gru.b_hh"),
            "fc1.w": _param(rng, (H, dense), H, dense, "fc1.w"),
            "fc1.b": _zeros((dense,), "fc1.b"),
            "fc2.w": _param(rng, (dense, 2), dense, 2, "fc2.w"),
            "fc2.b": _zeros((2,), "fc2.b"),
        }

    def __call__(self, states):
        p = self.params
        states = np.asarray(states)
        h = Tensor(np.zeros((states.shape[0], self.hidden)))
        for t in range(states.shape[2]):
            h = ad.gru_cell(Tensor(states[:, :, t]), h, p["gru.w_ih"], p["gru.w_hh"],
                            p["gru.b_ih"], p["gru.b_hh"])
        z = ad.relu(ad.linear(h, p["fc1.w"], p["fc1.b"]))
        return ad.softmax(ad.linear(z, p["fc2.w"], p["fc2.b"]))


# ---------------------------------------------------------------- replay

@dataclass
class Transition:
    state: np.ndarray
    action: np.ndarray
    reward: float
    next_state: np.ndarray
    done: bool


class ReplayBuffer:
    def __init__(self, capacity, rng):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.items = deque(maxlen=capacity)
        self.rng = rng

    def __len__(self):
        return len(self.items)

    def add(self, transition):
        self.items.append(transition)

    def sample_indices(self, n):
        return self.rng.integers(0, len(self.items), size=n)

    def sample(self, n):
        """Uniform draw with replacement, stacked into arrays."""
        if not self.items:
            raise ValueError("cannot sample an empty buffer")
        batch = [self.items[i] for i in self.sample_indices(n)]
        return {
            "state": np.stack([b.state for b in batch]),
            "action": np.stack([b.action for b in batch]),
            "reward": np.array([b.reward for b in batch]),
            "next_state": np.stack([b.next_state for b in batch]),
            "done": np.array([b.done for b in batch], dtype=bool),
        }


# ---------------------------------------------------------------- DDPG pieces

def act(net, state, noise_scale=0.0, rng=None):
    """Portfolio weights for one state; Gaussian noise is added to the logits."""
    states = np.asarray(state)[None]
    if states.shape[1:] != (net.n_assets + 1, net.window):
        raise ad.ShapeError(f"act: state shape {states.shape[1:]} != "
                            f"{(net.n_assets + 1, net.window)}")
    noise = None
    if noise_scale > 0:
        noise = rng.normal(0.0, noise_scale, size=(1, net.n_assets + 1))
    w = net.policy(states, noise).data[0]
    return w / w.sum()


def critic_targets(batch, target, gamma):
    """y = r + gamma * Q'(s', mu'(s')) with bootstrapping cut at episode ends."""
    s2 = batch["next_state"]
    feats = target.actor_encoder(s2)
    a2 = target.actor(feats)
    q2 = target.critic(feats if target.shared else target.critic_encoder(s2), a2).data
    return batch["reward"] + gamma * np.where(batch["done"], 0.0, q2)


def critic_loss(net, batch, y):
    q = net.q_value(batch["state"], batch["action"])
    diff = ad.sub(q, Tensor(y))
    return ad.mean(ad.mul(diff, diff))


def update_critic(net, batch, y, opt):
    """One Adam step on the mean squared TD error; returns the pre-step loss."""
    loss = critic_loss(net, batch, y)
    ad.backward(loss)
    opt.step()
    for p in net.actor.parameters():
        p.grad = None
    return float(loss.data)


def actor_objective(net, states):
    """Mean Q(s, mu(s)) with critic-side weights and state features held fixed."""
    feats = net.actor_encoder(states)
    actions = net.actor(feats)
    frozen = {k: Tensor(v.data) for k, v in net.critic.params.items()}
    if net.shared:
        critic_feats = feats.detach()
    else:
        critic_feats = Tensor(net.critic_encoder(states).data)
    return ad.mean(net.critic(critic_feats, actions, frozen))


def update_actor(net, batch, opt):
    """One Adam ascent step on mean Q; moves only encoder + actor decoder."""
    obj = actor_objective(net, batch["state"])
    ad.backward(obj)
    opt.step(maximize=True)
    return float(obj.data)


def soft_update(online, target, tau):
    src, dst = online.named_parameters(), target.named_parameters()
    for k, t in dst.items():
        t.data *= 1.0 - tau
        t.data += tau * src[k].data


def copy_network(net):
    return copy.deepcopy(net)


# ---------------------------------------------------------------- PG pieces

def signal(net, state, mode="test", rng=None):
    """Bullish/bearish signal: sampled in training, argmax (ties to S+) in testing."""
    p = net(np.asarray(state)[None]).data[0]
    return signal_from_probs(p, mode, rng)


def signal_from_probs(p, mode="test", rng=None):
    if mode == "train":
        return Signal.S_PLUS if rng.random() < p[0] else Signal.S_MINUS
    if mode != "test":
        raise ValueError(f"unknown mode {mode!r}")
    return Signal.S_PLUS if p[0] >= p[1] else Signal.S_MINUS


def pg_returns(rewards, gamma):
    """Discounted reward-to-go for each step."""
    rewards = np.asarray(rewards, dtype=np.float64)
    if rewards.size == 0:
        raise ValueError("empty reward sequence")
    out = np.empty_like(rewards)
    acc = 0.0
    for i in range(rewards.size - 1, -1, -1):
        acc = rewards[i] + gamma * acc
        out[i] = acc
    return out


def policy_objective(net, states, actions, psi):
    """sum_t psi_t * ln p(a_t | s_t); actions are 0 for S+ and 1 for S-."""
    probs = net(states)
    logp = ad.log(ad.take(probs, np.asarray(actions)))
    return ad.sum(ad.mul(logp, Tensor(psi)))


def update_policy(net, states, actions, psi, opt, standardize=False):
    psi = np.asarray(psi, dtype=np.float64)
    if standardize and psi.size > 1 and psi.std() > 0:
        psi = (psi - psi.mean()) / psi.std()
    obj = policy_objective(net, np.asarray(states), actions, psi)
    ad.backward(obj)
    opt.step(maximize=True)
    return float(obj.data)


# ---------------------------------------------------------------- agent & training

class Agent:
    """Online nets, targets, optimizers and random streams for one training run."""

    def __init__(self, n_assets, window, hyper=Hyperparams(), seed=0):
        self.hyper = hyper
        ss = np.random.SeedSequence(seed)
        init_seq, noise_seq, buf_seq, sig_seq = ss.spawn(4)
        init_rng = np.random.Generator(np.random.PCG64(init_seq))
        self.net = ActorCriticNet(init_rng, n_assets, window, hyper)
        self.policy_net = PolicyNet(init_rng, n_assets, hyper.gru_hidden)
        self.target = copy_network(self.net)
        self.noise_rng = np.random.Generator(np.random.PCG64(noise_seq))
        self.signal_rng = np.random.Generator(np.random.PCG64(sig_seq))
        self.buffer = ReplayBuffer(hyper.buffer_capacity, np.random.Generator(np.random.PCG64(buf_seq)))
        self.critic_opt = ad.Adam(self.net.critic_parameters(), hyper.lr_critic)
        self.actor_opt = ad.Adam(self.net.actor_parameters(), hyper.lr_actor)
        self.policy_opt = ad.Adam(self.policy_net.parameters(), hyper.lr_policy)

    @property
    def n_assets(self):
        return self.net.n_assets

    @property
    def window(self):
        return self.net.window

    def named_parameters(self):
        out = {f"online.{k}": v for k, v in self.net.named_parameters().items()}
        out.update({f"target.{k}": v for k, v in self.target.named_parameters().items()})
        out.update(self.policy_net.named_parameters("policy."))
        return out

    def meta(self):
        return {"n_assets": self.n_assets, "window": self.window, "hyper": asdict(self.hyper)}

    def save(self, path):
        ad.save_checkpoint(path, self.named_parameters(), self.meta())

    @classmethod
    def load(cls, path):
        params, meta = ad.load_checkpoint(path)
        agent = cls(meta["n_assets"], meta["window"], Hyperparams(**meta["hyper"]))
        for k, t in agent.named_parameters().items():
            if params[k].shape != t.data.shape:
                raise ValueError(f"checkpoint parameter {k} has shape {params[k].shape}")
            t.data[...] = params[k]
        return agent

    def policy_fn(self, use_signal=True):
        """Deterministic backtest policy: no exploration noise, argmax signal."""
        def fn(state, env):
            w = act(self.net, state, 0.0)
            sig = signal(self.policy_net, state, "test") if use_signal else Signal.S_PLUS
            return w, sig
        return fn


@dataclass
class EpisodeLog:
    episode: int
    cum_reward: float
    final_value: float
    critic_loss_mean: float
    noise_scale: float
    mean_weights: list = field(default_factory=list)
    mean_gini: float = 0.0
    bankrupt: bool = False

    def record(self):
        return {"episode": self.episode, "cum_reward": self.cum_reward,
                "final_value": self.final_value, "critic_loss_mean": self.critic_loss_mean,
                "noise_scale": self.noise_scale}


def run_training_episode(env, agent, episode):
    h = agent.hyper
    noise = h.noise_scale(episode)
    state = env.reset()
    states, signals, pg_rewards, losses, weights = [], [], [], [], []
    cum_reward, bankrupt = 0.0, False
    while True:
        a = act(agent.net, state, noise, agent.noise_rng)
        sig = signal(agent.policy_net, state, "train", agent.signal_rng)
        try:
            res = env.step(a, sig)
        except AccountingError:
            bankrupt = True
            break
        states.append(state)
        signals.append(0 if sig == Signal.S_PLUS else 1)
        pg_rewards.append(res.pg_reward)
        weights.append(a)
        cum_reward += res.reward
        agent.buffer.add(Transition(state, a, res.reward, res.next_state, res.done))
        batch = agent.buffer.sample(h.batch_size)
        y = critic_targets(batch, agent.target, h.gamma)
        losses.append(update_critic(agent.net, batch, y, agent.critic_opt))
        update_actor(agent.net, batch, agent.actor_opt)
        soft_update(agent.net, agent.target, h.tau)
        state = res.next_state
        if res.done:
            break
    if states:
        psi = pg_returns(pg_rewards, h.pg_gamma)
        update_policy(agent.policy_net, states, signals, psi, agent.policy_opt, h.standardize_psi)
    w = np.array(weights) if weights else np.zeros((1, agent.n_assets + 1))
    return EpisodeLog(episode, cum_reward, env.value,
                      float(np.mean(losses)) if losses else math.nan, noise,
                      w.mean(axis=0).tolist(), float(np.mean(1.0 - (w * w).sum(axis=1))),
                      bankrupt)


def train(env, agent, progress=None):
    """Algorithm loop: per-step DDPG updates, per-episode policy-gradient update."""
    logs = []
    for ep in range(agent.hyper.episodes):
        log = run_training_episode(env, agent, ep)
        logs.append(log)
        if progress:
            progress(log)
    return logs
