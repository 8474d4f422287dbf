"""Gradient checks of the full actor, critic and policy networks."""
import numpy as np

from augddpg import agents as ag
from augddpg import autodiff as ad
from augddpg.autodiff import Tensor

from gradcheck import check

SMALL = ag.Hyperparams(conv1_maps=3, conv2_maps=4, hidden=6, gru_hidden=5)


def _weights(rng, shape):
    return Tensor(rng.standard_normal(shape))


def _frozen_critic_objective(net, states):
    feats = Tensor(net.critic_encoder(states).data.copy())
    return lambda: ad.mean(net.critic(feats, net.policy(states)))


def network_errors(seed, hyper=SMALL, n_assets=2, window=3, batch=3, max_coords=None):
    """Worst relative error for actor, critic, actor objective and policy on one instance."""
    rng = np.random.default_rng(seed)
    net = ag.ActorCriticNet(rng, n_assets, window, hyper)
    pol = ag.PolicyNet(rng, n_assets, hyper.gru_hidden)
    # random N(0,1) parameters so biases are exercised too
    for t in list(net.named_parameters().values()) + pol.parameters():
        t.data[...] = rng.standard_normal(t.data.shape) * 0.5
    states = rng.standard_normal((batch, n_assets + 1, window))
    actions = rng.dirichlet(np.ones(n_assets + 1), size=batch)
    wa = _weights(rng, (batch, n_assets + 1))
    wq = _weights(rng, (batch,))
    wp = _weights(rng, (batch, 2))
    out = {
        "actor": check(lambda: ad.sum(ad.mul(net.policy(states), wa)), net.actor_parameters(),
                       rng, max_coords),
        "critic": check(lambda: ad.sum(ad.mul(net.q_value(states, actions), wq)),
                        net.critic_parameters(), rng, max_coords),
        # the actor objective treats critic weights and critic state features as constants
        "actor_objective": check(lambda: ag.actor_objective(net, states), net.actor_parameters(),
                                 rng, max_coords, _frozen_critic_objective(net, states)),
        "policy": check(lambda: ad.sum(ad.mul(pol(states), wp)), pol.parameters(), rng, max_coords),
    }
    return out
