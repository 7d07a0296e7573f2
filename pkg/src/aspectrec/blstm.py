"""Stacked bidirectional peephole-LSTM sequence classifier.

Each hidden layer runs one LSTM over the sequence left-to-right and an
independent one right-to-left, both from zero initial state; their per-step
outputs are concatenated to feed the next layer. The output layer projects
the two directions of the last layer with separate matrices summed into one
logit vector per step, and every step is classified independently (no
sequence-level vote).

The cell follows the peephole formulation: gates see the previous cell
state through elementwise peephole vectors, and the output gate sees the
freshly updated cell state.
"""

from dataclasses import dataclass

import numpy as np

from .numkit import Rng, sigmoid, softmax

GATES = ("I", "i", "f", "o")  # block input, input gate, forget gate, output gate
PEEP_GATES = ("i", "f", "o")


@dataclass
class LayerParams:
    """One direction of one layer: per-gate input weights (hidden x input),
    recurrent weights (hidden x hidden), biases, and peephole vectors."""

    w_in: dict
    w_rec: dict
    bias: dict
    peep: dict

    @property
    def input_dim(self):
        return self.w_in["I"].shape[1]

    @property
    def hidden_dim(self):
        return self.w_in["I"].shape[0]

    def named_tensors(self):
        out = []
        for g in GATES:
            out.append((f"W_{g}", self.w_in[g]))
        for g in GATES:
            out.append((f"R_{g}", self.w_rec[g]))
        for g in GATES:
            out.append((f"b_{g}", self.bias[g]))
        for g in PEEP_GATES:
            out.append((f"p_{g}", self.peep[g]))
        return out


@dataclass
class LstmState:
    """Cell state and block output of one step."""

    cell: np.ndarray
    out: np.ndarray


@dataclass
class BlstmModel:
    """Direction pairs per layer plus the summed output projection."""

    layers: list  # [(forward LayerParams, backward LayerParams), ...]
    proj_fw: np.ndarray  # (classes, last hidden)
    proj_bw: np.ndarray  # (classes, last hidden)
    proj_b: np.ndarray   # (classes,)

    @property
    def input_dim(self):
        return self.layers[0][0].input_dim

    @property
    def classes(self):
        return self.proj_fw.shape[0]

    @property
    def layer_sizes(self):
        return tuple(fw.hidden_dim for fw, _ in self.layers)

    def named_tensors(self):
        out = []
        for idx, (fw, bw) in enumerate(self.layers):
            for tag, params in (("fw", fw), ("bw", bw)):
                for name, tensor in params.named_tensors():
                    out.append((f"layer{idx}.{tag}.{name}", tensor))
        out.append(("proj.w_fw", self.proj_fw))
        out.append(("proj.w_bw", self.proj_bw))
        out.append(("proj.b", self.proj_b))
        return out


@dataclass
class AspectSequence:
    """Ordered reduced feature vectors of one target sweep with one label
    per step."""

    steps: np.ndarray   # (T, dim)
    labels: np.ndarray  # (T,) int
    target_id: str = ""
    class_id: int = -1

    def __post_init__(self):
        self.steps = np.asarray(self.steps, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.steps.ndim != 2 or self.steps.shape[0] == 0:
            raise ValueError("sequence needs at least one step")
        if self.labels.shape[0] != self.steps.shape[0]:
            raise ValueError("one label per step required")


@dataclass
class BlstmHyper:
    """Sequence-SGD settings: one parameter update per sequence, gradient
    clipped to a global norm cap."""

    learning_rate: float = 1e-7
    epochs: int = 100
    clip_norm: float = 5.0
    seed: int = 0
    stop_accuracy: float = None

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")


@dataclass
class EpochStats:
    epoch: int
    loss: float
    accuracy: float


def _zero_layer(input_dim, hidden_dim):
    return LayerParams(
        w_in={g: np.zeros((hidden_dim, input_dim)) for g in GATES},
        w_rec={g: np.zeros((hidden_dim, hidden_dim)) for g in GATES},
        bias={g: np.zeros(hidden_dim) for g in GATES},
        peep={g: np.zeros(hidden_dim) for g in PEEP_GATES},
    )


def zero_model(input_dim, layer_sizes, classes):
    """All-zero model: every hidden state stays zero and every step gets a
    uniform class posterior."""
    layers = []
    dim = input_dim
    for size in layer_sizes:
        layers.append((_zero_layer(dim, size), _zero_layer(dim, size)))
        dim = 2 * size
    return BlstmModel(layers=layers,
                      proj_fw=np.zeros((classes, layer_sizes[-1])),
                      proj_bw=np.zeros((classes, layer_sizes[-1])),
                      proj_b=np.zeros(classes))


def init_model(input_dim, layer_sizes, classes, rng):
    """Seeded init: weight matrices uniform in +-sqrt(6/(fan_in+fan_out)),
    peepholes zero, biases zero except the forget gate's, which starts at 1
    so early training remembers across steps. Draw order is fixed (layers in
    order, forward direction before backward, gates I, i, f, o, inputs
    before recurrents)."""
    model = zero_model(input_dim, layer_sizes, classes)
    for fw, bw in model.layers:
        for params in (fw, bw):
            d, h = params.input_dim, params.hidden_dim
            for g in GATES:
                params.w_in[g] = rng.uniform_signed(np.sqrt(6.0 / (d + h)), (h, d))
            for g in GATES:
                params.w_rec[g] = rng.uniform_signed(np.sqrt(6.0 / (2 * h)), (h, h))
            params.bias["f"] = np.ones(h)
    last = layer_sizes[-1]
    lim = np.sqrt(6.0 / (last + classes))
    model.proj_fw = rng.uniform_signed(lim, (classes, last))
    model.proj_bw = rng.uniform_signed(lim, (classes, last))
    return model


def lstm_step(p, x, prev):
    """One cell update.

    block   I_n = tanh(W_I x + R_I O_prev + b_I)
    input   i_n = sigma(W_i x + R_i O_prev + p_i*c_prev + b_i)
    forget  f_n = sigma(W_f x + R_f O_prev + p_f*c_prev + b_f)
    cell    c_n = i_n*I_n + f_n*c_prev
    output  o_n = sigma(W_o x + R_o O_prev + p_o*c_n + b_o)
    out     O_n = o_n*tanh(c_n)
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] != p.input_dim:
        raise ValueError(f"input dim {x.shape[0]} does not match "
                         f"layer input dim {p.input_dim}")
    block = np.tanh(p.w_in["I"] @ x + p.w_rec["I"] @ prev.out + p.bias["I"])
    gate_i = sigmoid(p.w_in["i"] @ x + p.w_rec["i"] @ prev.out
                     + p.peep["i"] * prev.cell + p.bias["i"])
    gate_f = sigmoid(p.w_in["f"] @ x + p.w_rec["f"] @ prev.out
                     + p.peep["f"] * prev.cell + p.bias["f"])
    cell = gate_i * block + gate_f * prev.cell
    gate_o = sigmoid(p.w_in["o"] @ x + p.w_rec["o"] @ prev.out
                     + p.peep["o"] * cell + p.bias["o"])
    return LstmState(cell=cell, out=gate_o * np.tanh(cell))


def _dir_forward(p, xs):
    """Run one direction over (T, D) inputs from zero state; cache per-step
    activations for backpropagation through time."""
    # contiguous input keeps the matmul path (and hence rounding) identical
    # for reversed views, making direction duality exact
    xs = np.ascontiguousarray(xs, dtype=np.float64)
    steps, hidden = xs.shape[0], p.hidden_dim
    # precompute the input contributions of all gates in one pass
    in_act = {g: xs @ p.w_in[g].T + p.bias[g] for g in GATES}
    cache = {
        "xs": xs,
        "block": np.empty((steps, hidden)),
        "gate_i": np.empty((steps, hidden)),
        "gate_f": np.empty((steps, hidden)),
        "gate_o": np.empty((steps, hidden)),
        "cell": np.empty((steps, hidden)),
        "out": np.empty((steps, hidden)),
        "prev_out": np.empty((steps, hidden)),
        "prev_cell": np.empty((steps, hidden)),
    }
    prev_out = np.zeros(hidden)
    prev_cell = np.zeros(hidden)
    for t in range(steps):
        block = np.tanh(in_act["I"][t] + p.w_rec["I"] @ prev_out)
        gate_i = sigmoid(in_act["i"][t] + p.w_rec["i"] @ prev_out
                         + p.peep["i"] * prev_cell)
        gate_f = sigmoid(in_act["f"][t] + p.w_rec["f"] @ prev_out
                         + p.peep["f"] * prev_cell)
        cell = gate_i * block + gate_f * prev_cell
        gate_o = sigmoid(in_act["o"][t] + p.w_rec["o"] @ prev_out
                         + p.peep["o"] * cell)
        out = gate_o * np.tanh(cell)
        cache["block"][t] = block
        cache["gate_i"][t] = gate_i
        cache["gate_f"][t] = gate_f
        cache["gate_o"][t] = gate_o
        cache["cell"][t] = cell
        cache["out"][t] = out
        cache["prev_out"][t] = prev_out
        cache["prev_cell"][t] = prev_cell
        prev_out, prev_cell = out, cell
    return cache


def _dir_backward(p, cache, d_out_ext):
    """BPTT for one direction. d_out_ext is the loss gradient arriving at
    each step's block output from above; returns (grads dict, d_xs)."""
    xs = cache["xs"]
    steps, hidden = xs.shape[0], p.hidden_dim
    grads = {name: np.zeros_like(t) for name, t in _layer_tensor_items(p)}
    d_xs = np.zeros_like(xs)
    d_cell_carry = np.zeros(hidden)
    d_act_next = {g: np.zeros(hidden) for g in GATES}
    for t in range(steps - 1, -1, -1):
        block = cache["block"][t]
        gate_i = cache["gate_i"][t]
        gate_f = cache["gate_f"][t]
        gate_o = cache["gate_o"][t]
        cell = cache["cell"][t]
        prev_out = cache["prev_out"][t]
        prev_cell = cache["prev_cell"][t]
        tanh_cell = np.tanh(cell)

        d_out = d_out_ext[t].copy()
        for g in GATES:
            d_out += p.w_rec[g].T @ d_act_next[g]
        d_act_o = (d_out * tanh_cell) * gate_o * (1.0 - gate_o)
        d_cell = (d_out * gate_o * (1.0 - tanh_cell ** 2)
                  + p.peep["o"] * d_act_o + d_cell_carry)
        d_act_I = (d_cell * gate_i) * (1.0 - block ** 2)
        d_act_i = (d_cell * block) * gate_i * (1.0 - gate_i)
        d_act_f = (d_cell * prev_cell) * gate_f * (1.0 - gate_f)

        d_act = {"I": d_act_I, "i": d_act_i, "f": d_act_f, "o": d_act_o}
        x_t = xs[t]
        for g in GATES:
            grads[f"W_{g}"] += np.outer(d_act[g], x_t)
            grads[f"R_{g}"] += np.outer(d_act[g], prev_out)
            grads[f"b_{g}"] += d_act[g]
            d_xs[t] += p.w_in[g].T @ d_act[g]
        grads["p_i"] += d_act_i * prev_cell
        grads["p_f"] += d_act_f * prev_cell
        grads["p_o"] += d_act_o * cell

        d_cell_carry = (d_cell * gate_f + p.peep["i"] * d_act_i
                        + p.peep["f"] * d_act_f)
        d_act_next = d_act
    return grads, d_xs


def _layer_tensor_items(p):
    return p.named_tensors()


def blstm_layer(fw, bw, xs):
    """Per-step concatenation [forward out ; backward out] over the sequence.

    The backward direction is the forward recurrence run on the reversed
    sequence, so reversing the inputs and swapping the direction parameters
    reverses the output (with halves swapped) exactly.
    """
    xs = np.asarray(xs, dtype=np.float64)
    if xs.ndim != 2 or xs.shape[0] == 0:
        raise ValueError("sequence must be a nonempty (steps, dim) matrix")
    fw_out = _dir_forward(fw, xs)["out"]
    bw_out = _dir_forward(bw, xs[::-1])["out"][::-1]
    return np.concatenate([fw_out, bw_out], axis=1)


def _stack_forward(model, xs, want_caches=False):
    xs = np.asarray(xs, dtype=np.float64)
    if xs.ndim != 2 or xs.shape[0] == 0:
        raise ValueError("sequence must be a nonempty (steps, dim) matrix")
    caches = []
    inputs = xs
    fw_out = bw_out = None
    for idx, (fw, bw) in enumerate(model.layers):
        if inputs.shape[1] != fw.input_dim:
            raise ValueError(f"layer {idx}: input dim {inputs.shape[1]} does "
                             f"not match expected {fw.input_dim}")
        fw_cache = _dir_forward(fw, inputs)
        bw_cache = _dir_forward(bw, inputs[::-1])
        fw_out = fw_cache["out"]
        bw_out = bw_cache["out"][::-1]
        if want_caches:
            caches.append((inputs, fw_cache, bw_cache))
        inputs = np.concatenate([fw_out, bw_out], axis=1)
    logits = fw_out @ model.proj_fw.T + bw_out @ model.proj_bw.T + model.proj_b
    return logits, caches, fw_out, bw_out


def stack_forward(model, xs):
    """Per-step logits of the full stack.

    Layers feed forward through concatenated direction outputs; the last
    layer's directions are combined by the summed projection
    y_n = W_fw fwO_n + W_bw bwO_n + b."""
    logits, _, _, _ = _stack_forward(model, xs)
    return logits


def classify(model, xs):
    """Per-step class probabilities and argmax labels (ties break to the
    lowest class index); every step is decided independently."""
    logits = stack_forward(model, xs)
    probs = softmax(logits, axis=-1)
    return probs, np.argmax(probs, axis=-1)


def bptt_grad(model, seq):
    """Mean per-step cross-entropy loss and gradients for every tensor."""
    loss, grads, _ = _loss_and_grads(model, seq)
    return loss, grads


def _loss_and_grads(model, seq):
    xs, labels = seq.steps, seq.labels
    steps = xs.shape[0]
    logits, caches, fw_out, bw_out = _stack_forward(model, xs, want_caches=True)
    shifted = logits - np.max(logits, axis=-1, keepdims=True)
    log_probs = shifted - np.log(np.sum(np.exp(shifted), axis=-1, keepdims=True))
    probs = np.exp(log_probs)
    idx = np.arange(steps)
    step_logp = log_probs[idx, labels]
    loss = -float(np.mean(step_logp))
    if not np.isfinite(loss):
        bad = int(np.flatnonzero(~np.isfinite(step_logp))[0])
        raise RuntimeError(f"non-finite loss at step {bad}")

    d_logits = probs.copy()
    d_logits[idx, labels] -= 1.0
    d_logits /= steps

    grads = {"proj.w_fw": d_logits.T @ fw_out,
             "proj.w_bw": d_logits.T @ bw_out,
             "proj.b": d_logits.sum(axis=0)}
    d_fw = d_logits @ model.proj_fw
    d_bw = d_logits @ model.proj_bw
    for layer_idx in range(len(model.layers) - 1, -1, -1):
        fw, bw = model.layers[layer_idx]
        inputs, fw_cache, bw_cache = caches[layer_idx]
        fw_grads, d_in_fw = _dir_backward(fw, fw_cache, d_fw)
        bw_grads, d_in_bw_rev = _dir_backward(bw, bw_cache, d_bw[::-1])
        d_inputs = d_in_fw + d_in_bw_rev[::-1]
        for name, g in fw_grads.items():
            grads[f"layer{layer_idx}.fw.{name}"] = g
        for name, g in bw_grads.items():
            grads[f"layer{layer_idx}.bw.{name}"] = g
        if layer_idx > 0:
            below = model.layers[layer_idx - 1][0].hidden_dim
            d_fw = d_inputs[:, :below]
            d_bw = d_inputs[:, below:]
    return loss, grads, probs


def clip_gradients(grads, max_norm):
    """Scale all gradients in place so their global norm is <= max_norm."""
    if max_norm is None:
        return 1.0
    total = np.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if total > max_norm > 0:
        scale = max_norm / total
        for g in grads.values():
            g *= scale
        return scale
    return 1.0


def train(model, sequences, hyper):
    """Sequence-at-a-time SGD with global-norm gradient clipping.

    Returns (model, per-epoch log). The logged accuracy is the running
    per-step training accuracy measured on the forward pass of each update
    (before that update is applied). Stops early when it reaches
    hyper.stop_accuracy, if set.
    """
    if not sequences:
        raise ValueError("at least one training sequence is required")
    rng = Rng(hyper.seed)
    log = []
    for epoch in range(hyper.epochs):
        order = rng.permutation(len(sequences))
        total_loss = 0.0
        correct = 0
        steps = 0
        for seq_pos, seq_idx in enumerate(order):
            seq = sequences[int(seq_idx)]
            try:
                loss, grads, probs = _loss_and_grads(model, seq)
            except RuntimeError as exc:
                raise RuntimeError(f"training diverged at epoch {epoch}, "
                                   f"sequence {int(seq_idx)}: {exc}") from exc
            clip_gradients(grads, hyper.clip_norm)
            if hyper.learning_rate != 0.0:
                for name, tensor in model.named_tensors():
                    tensor -= hyper.learning_rate * grads[name]
            total_loss += loss * seq.steps.shape[0]
            correct += int(np.sum(np.argmax(probs, axis=-1) == seq.labels))
            steps += seq.steps.shape[0]
        accuracy = correct / steps
        log.append(EpochStats(epoch, total_loss / steps, accuracy))
        if hyper.stop_accuracy is not None and accuracy >= hyper.stop_accuracy:
            break
    return model, log
