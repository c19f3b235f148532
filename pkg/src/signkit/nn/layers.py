"""Layer implementations.

Each layer owns its parameter arrays, caches what its backward pass needs
during forward, and accumulates parameter gradients into ``self.grads``.
``backward`` returns the gradient w.r.t. the layer input. Forward passes in
inference mode are pure and never mutate state (except BatchNorm's running
statistics, which update only in train mode), which is what makes offline
and streaming inference bit-identical.
"""

import numpy as np

from ..errors import EmptyError, ShapeError


def glorot_uniform(shape, rng, dtype=np.float64, fan_in=None, fan_out=None):
    """Glorot/Xavier uniform init; fans default to the first/last axis."""
    if fan_in is None:
        fan_in = int(np.prod(shape[:-1]))
    if fan_out is None:
        fan_out = int(shape[-1])
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


def softmax(logits):
    """Row softmax with max subtraction; rows sum to 1."""
    m = logits.max(axis=-1, keepdims=True)
    e = np.exp(logits - m)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_xent(logits, labels, class_weights=None):
    """Weighted categorical cross-entropy over (N, C) logits.

    ``labels`` are int class indices. Returns (loss, probs, grad_logits)
    with loss = (1/N) * sum_i w_{y_i} * (-log p_{i,y_i}) and
    grad_logits = w_{y_i} * (p_i - onehot_i) / N.
    """
    logits = np.asarray(logits)
    labels = np.asarray(labels)
    if logits.ndim != 2:
        raise ShapeError(f"logits must be (N, C), got {logits.shape}")
    n, c = logits.shape
    if class_weights is None:
        class_weights = np.ones(c, dtype=logits.dtype)
    else:
        class_weights = np.asarray(class_weights, dtype=logits.dtype)
        if class_weights.shape != (c,):
            raise ShapeError("class_weights must have one entry per class")
        if (class_weights <= 0).any():
            raise ShapeError("class_weights must be positive")
    m = logits.max(axis=-1, keepdims=True)
    shifted = logits - m
    logsum = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    logp = shifted - logsum
    probs = np.exp(logp)
    w = class_weights[labels]
    loss = float(-(w * logp[np.arange(n), labels]).sum() / n)
    grad = probs.copy()
    grad[np.arange(n), labels] -= 1.0
    grad *= (w / n)[:, None]
    return loss, probs, grad


class Layer:
    """Common layer interface; stateless layers leave params empty."""

    name = "layer"

    def __init__(self):
        self.params = {}
        self.grads = {}
        self.state = {}

    def param_count(self):
        return sum(int(p.size) for p in self.params.values()) + sum(
            int(s.size) for s in self.state.values()
        )

    def zero_grads(self):
        self.grads = {k: np.zeros_like(v) for k, v in self.params.items()}

    def forward(self, x, train=False, rng=None):
        raise NotImplementedError

    def backward(self, dout):
        raise NotImplementedError

    def output_shape(self, in_shape):
        raise NotImplementedError


class Conv2D(Layer):
    """Same-padded stride-1 cross-correlation plus bias.

    Input (N, H, W, Cin), kernel (kh, kw, Cin, Cout) with odd kh/kw.
    """

    def __init__(self, kernel, bias, name="conv2d"):
        super().__init__()
        kernel = np.asarray(kernel)
        bias = np.asarray(bias)
        if kernel.ndim != 4:
            raise ShapeError(f"kernel must be 4-d, got {kernel.shape}")
        if kernel.shape[0] % 2 == 0 or kernel.shape[1] % 2 == 0:
            raise ShapeError("same padding requires odd kernel dims")
        if bias.shape != (kernel.shape[3],):
            raise ShapeError("bias must have one entry per output channel")
        self.name = name
        self.params = {"kernel": kernel, "bias": bias}
        self.zero_grads()
        self._cache = None

    @classmethod
    def initialize(cls, kh, kw, cin, cout, rng, dtype=np.float64, name="conv2d"):
        kernel = glorot_uniform(
            (kh, kw, cin, cout), rng, dtype, fan_in=kh * kw * cin, fan_out=kh * kw * cout
        )
        bias = np.zeros(cout, dtype=dtype)
        return cls(kernel, bias, name=name)

    def _im2col(self, x):
        kh, kw, cin, _ = self.params["kernel"].shape
        n, h, w, c = x.shape
        ph, pw = (kh - 1) // 2, (kw - 1) // 2
        xp = np.pad(x, ((0, 0), (ph, ph), (pw, pw), (0, 0)))
        win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(1, 2))
        # win: (N, H, W, C, kh, kw) -> (N, H, W, kh, kw, C)
        cols = np.ascontiguousarray(win.transpose(0, 1, 2, 4, 5, 3))
        return cols.reshape(n * h * w, kh * kw * c)

    def forward(self, x, train=False, rng=None):
        kernel = self.params["kernel"]
        kh, kw, cin, cout = kernel.shape
        if x.ndim != 4 or x.shape[3] != cin:
            raise ShapeError(
                f"conv2d expects (N, H, W, {cin}), got {x.shape}"
            )
        n, h, w, _ = x.shape
        cols = self._im2col(x)
        kmat = kernel.reshape(kh * kw * cin, cout)
        out = cols @ kmat + self.params["bias"]
        if train:
            self._cache = (cols, x.shape)
        return out.reshape(n, h, w, cout)

    def backward(self, dout):
        cols, x_shape = self._cache
        kernel = self.params["kernel"]
        kh, kw, cin, cout = kernel.shape
        n, h, w, _ = x_shape
        dflat = dout.reshape(n * h * w, cout)
        self.grads["kernel"] += (cols.T @ dflat).reshape(kernel.shape)
        self.grads["bias"] += dflat.sum(axis=0)
        dcols = (dflat @ kernel.reshape(kh * kw * cin, cout).T).reshape(
            n, h, w, kh, kw, cin
        )
        ph, pw = (kh - 1) // 2, (kw - 1) // 2
        dxp = np.zeros((n, h + 2 * ph, w + 2 * pw, cin), dtype=dout.dtype)
        for u in range(kh):
            for v in range(kw):
                dxp[:, u : u + h, v : v + w, :] += dcols[:, :, :, u, v, :]
        return dxp[:, ph : ph + h, pw : pw + w, :]

    def output_shape(self, in_shape):
        h, w, _ = in_shape
        return (h, w, self.params["kernel"].shape[3])


class MaxPool2D(Layer):
    """Non-overlapping max pooling with floor semantics: trailing rows or
    columns that do not fill a window are dropped. Gradient goes to the
    first maximal element in row-major window scan order."""

    def __init__(self, pool=(2, 2), name="maxpool2d"):
        super().__init__()
        self.pool = tuple(pool)
        self.name = name
        self._cache = None

    def forward(self, x, train=False, rng=None):
        ph, pw = self.pool
        n, h, w, c = x.shape
        ho, wo = h // ph, w // pw
        if ho < 1 or wo < 1:
            raise ShapeError(f"input {x.shape[1:3]} too small for pool {self.pool}")
        crop = x[:, : ho * ph, : wo * pw, :]
        windows = crop.reshape(n, ho, ph, wo, pw, c).transpose(0, 1, 3, 2, 4, 5)
        flat = windows.reshape(n, ho, wo, ph * pw, c)
        arg = flat.argmax(axis=3)
        out = np.take_along_axis(flat, arg[:, :, :, None, :], axis=3)[:, :, :, 0, :]
        if train:
            self._cache = (arg, x.shape)
        return out

    def backward(self, dout):
        arg, x_shape = self._cache
        ph, pw = self.pool
        n, h, w, c = x_shape
        ho, wo = h // ph, w // pw
        dflat = np.zeros((n, ho, wo, ph * pw, c), dtype=dout.dtype)
        np.put_along_axis(dflat, arg[:, :, :, None, :], dout[:, :, :, None, :], axis=3)
        dcrop = dflat.reshape(n, ho, wo, ph, pw, c).transpose(0, 1, 3, 2, 4, 5)
        dx = np.zeros(x_shape, dtype=dout.dtype)
        dx[:, : ho * ph, : wo * pw, :] = dcrop.reshape(n, ho * ph, wo * pw, c)
        return dx

    def output_shape(self, in_shape):
        h, w, c = in_shape
        return (h // self.pool[0], w // self.pool[1], c)


class BatchNorm(Layer):
    """Per-channel batch normalization over all axes but the last.

    Parameter count is 4C: gamma/beta plus the running mean/var that the
    inference path uses.
    """

    def __init__(self, gamma, beta, momentum=0.9, eps=1e-5, name="batchnorm"):
        super().__init__()
        gamma = np.asarray(gamma)
        beta = np.asarray(beta)
        if gamma.shape != beta.shape or gamma.ndim != 1:
            raise ShapeError("gamma/beta must be 1-d and same shape")
        self.name = name
        self.momentum = momentum
        self.eps = eps
        self.params = {"gamma": gamma, "beta": beta}
        self.state = {
            "running_mean": np.zeros_like(gamma),
            "running_var": np.ones_like(gamma),
        }
        self.zero_grads()
        self._cache = None

    @classmethod
    def initialize(cls, channels, rng=None, dtype=np.float64, name="batchnorm", **kw):
        return cls(
            np.ones(channels, dtype=dtype), np.zeros(channels, dtype=dtype), name=name, **kw
        )

    def forward(self, x, train=False, rng=None):
        c = self.params["gamma"].shape[0]
        if x.shape[-1] != c:
            raise ShapeError(f"batchnorm expects {c} channels, got {x.shape}")
        if x.size == 0:
            raise EmptyError("batchnorm on an empty batch")
        if train:
            axes = tuple(range(x.ndim - 1))
            mean = x.mean(axis=axes)
            var = x.var(axis=axes)
            std = np.sqrt(var + self.eps)
            xhat = (x - mean) / std
            m = self.momentum
            self.state["running_mean"] = m * self.state["running_mean"] + (1 - m) * mean
            self.state["running_var"] = m * self.state["running_var"] + (1 - m) * var
            self._cache = (xhat, std, x.shape)
            return self.params["gamma"] * xhat + self.params["beta"]
        std = np.sqrt(self.state["running_var"] + self.eps)
        xhat = (x - self.state["running_mean"]) / std
        return self.params["gamma"] * xhat + self.params["beta"]

    def backward(self, dout):
        xhat, std, x_shape = self._cache
        axes = tuple(range(dout.ndim - 1))
        m = float(np.prod([x_shape[a] for a in axes]))
        dgamma = (dout * xhat).sum(axis=axes)
        dbeta = dout.sum(axis=axes)
        self.grads["gamma"] += dgamma
        self.grads["beta"] += dbeta
        g = self.params["gamma"]
        return (g / std) * (dout - dbeta / m - xhat * dgamma / m)

    def output_shape(self, in_shape):
        return tuple(in_shape)


class Dense(Layer):
    """Affine map on the last axis; leading axes are preserved, so the same
    layer serves (N, Din) heads and per-timestep (N, T, Din) projections."""

    def __init__(self, weights, bias, name="dense"):
        super().__init__()
        weights = np.asarray(weights)
        bias = np.asarray(bias)
        if weights.ndim != 2 or bias.shape != (weights.shape[1],):
            raise ShapeError("dense needs weights (Din, Dout) and bias (Dout,)")
        self.name = name
        self.params = {"weights": weights, "bias": bias}
        self.zero_grads()
        self._cache = None

    @classmethod
    def initialize(cls, din, dout, rng, dtype=np.float64, name="dense"):
        w = glorot_uniform((din, dout), rng, dtype)
        return cls(w, np.zeros(dout, dtype=dtype), name=name)

    def forward(self, x, train=False, rng=None):
        w = self.params["weights"]
        if x.shape[-1] != w.shape[0]:
            raise ShapeError(
                f"dense expects last axis {w.shape[0]}, got {x.shape}"
            )
        if train:
            self._cache = x
        return x @ w + self.params["bias"]

    def backward(self, dout):
        x = self._cache
        w = self.params["weights"]
        xf = x.reshape(-1, w.shape[0])
        df = dout.reshape(-1, w.shape[1])
        self.grads["weights"] += xf.T @ df
        self.grads["bias"] += df.sum(axis=0)
        return (df @ w.T).reshape(x.shape)

    def output_shape(self, in_shape):
        return tuple(in_shape[:-1]) + (self.params["weights"].shape[1],)


class LSTM(Layer):
    """Single-direction LSTM over (N, T, Din) with gate order (i, f, g, o).

    Returns the full hidden sequence (N, T, U); callers slice the last step
    when needed. Backward is truncated nowhere: full BPTT.
    """

    def __init__(self, wx, wh, b, name="lstm"):
        super().__init__()
        wx, wh, b = np.asarray(wx), np.asarray(wh), np.asarray(b)
        units = wh.shape[0]
        if wx.shape[1] != 4 * units or wh.shape != (units, 4 * units) or b.shape != (4 * units,):
            raise ShapeError("inconsistent LSTM parameter shapes")
        self.name = name
        self.units = units
        self.params = {"wx": wx, "wh": wh, "b": b}
        self.zero_grads()
        self._cache = None

    @classmethod
    def initialize(cls, din, units, rng, dtype=np.float64, name="lstm"):
        wx = glorot_uniform((din, 4 * units), rng, dtype, fan_in=din, fan_out=units)
        wh = glorot_uniform((units, 4 * units), rng, dtype, fan_in=units, fan_out=units)
        b = np.zeros(4 * units, dtype=dtype)
        b[units : 2 * units] = 1.0  # forget-gate bias stabilizer
        return cls(wx, wh, b, name=name)

    @staticmethod
    def _sigmoid(z):
        out = np.empty_like(z)
        pos = z >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
        ez = np.exp(z[~pos])
        out[~pos] = ez / (1.0 + ez)
        return out

    def forward(self, x, train=False, rng=None):
        wx, wh, b = self.params["wx"], self.params["wh"], self.params["b"]
        if x.ndim != 3 or x.shape[2] != wx.shape[0]:
            raise ShapeError(f"lstm expects (N, T, {wx.shape[0]}), got {x.shape}")
        n, t, _ = x.shape
        u = self.units
        h = np.zeros((n, u), dtype=x.dtype)
        c = np.zeros((n, u), dtype=x.dtype)
        hs = np.empty((n, t, u), dtype=x.dtype)
        steps = []
        for k in range(t):
            z = x[:, k] @ wx + h @ wh + b
            i = self._sigmoid(z[:, :u])
            f = self._sigmoid(z[:, u : 2 * u])
            g = np.tanh(z[:, 2 * u : 3 * u])
            o = self._sigmoid(z[:, 3 * u :])
            c_new = f * c + i * g
            tc = np.tanh(c_new)
            h_new = o * tc
            if train:
                steps.append((x[:, k], h, c, i, f, g, o, tc))
            h, c = h_new, c_new
            hs[:, k] = h
        if train:
            self._cache = (steps, x.shape)
        return hs

    def backward(self, dhs):
        wx, wh = self.params["wx"], self.params["wh"]
        steps, x_shape = self._cache
        n, t, _ = x_shape
        u = self.units
        dx = np.empty(x_shape, dtype=dhs.dtype)
        dh_next = np.zeros((n, u), dtype=dhs.dtype)
        dc_next = np.zeros((n, u), dtype=dhs.dtype)
        dwx, dwh, db = self.grads["wx"], self.grads["wh"], self.grads["b"]
        for k in range(t - 1, -1, -1):
            x_k, h_prev, c_prev, i, f, g, o, tc = steps[k]
            dh = dhs[:, k] + dh_next
            do = dh * tc
            dc = dc_next + dh * o * (1.0 - tc * tc)
            di = dc * g
            df = dc * c_prev
            dg = dc * i
            dc_next = dc * f
            dz = np.concatenate(
                [
                    di * i * (1.0 - i),
                    df * f * (1.0 - f),
                    dg * (1.0 - g * g),
                    do * o * (1.0 - o),
                ],
                axis=1,
            )
            dwx += x_k.T @ dz
            dwh += h_prev.T @ dz
            db += dz.sum(axis=0)
            dx[:, k] = dz @ wx.T
            dh_next = dz @ wh.T
        return dx

    def output_shape(self, in_shape):
        return (in_shape[0], self.units)


class BiLSTM(Layer):
    """Bidirectional LSTM: forward and time-reversed passes concatenated.

    ``return_sequences=True`` yields (N, T, 2U) in input time order;
    otherwise the last forward step and last backward step (which saw the
    full sequence reversed) concatenate to (N, 2U).
    """

    def __init__(self, fwd: LSTM, bwd: LSTM, return_sequences=True, name="bilstm"):
        super().__init__()
        if fwd.units != bwd.units:
            raise ShapeError("both directions need the same unit count")
        self.name = name
        self.fwd = fwd
        self.bwd = bwd
        self.return_sequences = return_sequences
        self.units = fwd.units
        self._t = None

    @classmethod
    def initialize(cls, din, units, rng, dtype=np.float64, return_sequences=True, name="bilstm"):
        fwd = LSTM.initialize(din, units, rng, dtype, name=f"{name}.fwd")
        bwd = LSTM.initialize(din, units, rng, dtype, name=f"{name}.bwd")
        return cls(fwd, bwd, return_sequences=return_sequences, name=name)

    @property
    def params(self):
        out = {f"fwd.{k}": v for k, v in self.fwd.params.items()}
        out.update({f"bwd.{k}": v for k, v in self.bwd.params.items()})
        return out

    @params.setter
    def params(self, value):
        if value:  # Layer.__init__ assigns {}; direction layers own the rest
            raise ShapeError("set direction parameters via .fwd/.bwd")

    @property
    def grads(self):
        out = {f"fwd.{k}": v for k, v in self.fwd.grads.items()}
        out.update({f"bwd.{k}": v for k, v in self.bwd.grads.items()})
        return out

    @grads.setter
    def grads(self, value):
        if value:
            raise ShapeError("set direction gradients via .fwd/.bwd")

    def zero_grads(self):
        self.fwd.zero_grads()
        self.bwd.zero_grads()

    def forward(self, x, train=False, rng=None):
        self._t = x.shape[1]
        hf = self.fwd.forward(x, train=train)
        hb = self.bwd.forward(x[:, ::-1], train=train)
        if self.return_sequences:
            return np.concatenate([hf, hb[:, ::-1]], axis=2)
        return np.concatenate([hf[:, -1], hb[:, -1]], axis=1)

    def backward(self, dout):
        u = self.units
        if self.return_sequences:
            dhf = np.ascontiguousarray(dout[:, :, :u])
            dhb = np.ascontiguousarray(dout[:, ::-1, u:])
        else:
            n = dout.shape[0]
            dhf = np.zeros((n, self._t, u), dtype=dout.dtype)
            dhb = np.zeros((n, self._t, u), dtype=dout.dtype)
            dhf[:, -1] = dout[:, :u]
            dhb[:, -1] = dout[:, u:]
        dxf = self.fwd.backward(dhf)
        dxb = self.bwd.backward(dhb)
        return dxf + dxb[:, ::-1]

    def output_shape(self, in_shape):
        t, _ = in_shape
        if self.return_sequences:
            return (t, 2 * self.units)
        return (2 * self.units,)


class Dropout(Layer):
    """Inverted dropout: scaling happens at train time so inference is the
    identity (a requirement for bit-exact offline/online equivalence)."""

    def __init__(self, rate, name="dropout"):
        super().__init__()
        if not 0 <= rate < 1:
            raise ShapeError("dropout rate must be in [0, 1)")
        self.rate = rate
        self.name = name
        self._mask = None

    def forward(self, x, train=False, rng=None):
        if not train or self.rate == 0.0:
            self._mask = None
            return x
        keep = 1.0 - self.rate
        mask = (rng.random(size=x.shape) >= self.rate).astype(x.dtype)
        self._mask = mask / keep
        return x * self._mask

    def backward(self, dout):
        if self._mask is None:
            return dout
        return dout * self._mask

    def output_shape(self, in_shape):
        return tuple(in_shape)


class Flatten(Layer):
    """(N, ...) -> (N, prod(...))."""

    def __init__(self, name="flatten"):
        super().__init__()
        self.name = name
        self._shape = None

    def forward(self, x, train=False, rng=None):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dout):
        return dout.reshape(self._shape)

    def output_shape(self, in_shape):
        return (int(np.prod(in_shape)),)


class TimeFlatten(Layer):
    """(N, T, ...) -> (N, T, prod(...)); keeps the time axis intact."""

    def __init__(self, name="time_flatten"):
        super().__init__()
        self.name = name
        self._shape = None

    def forward(self, x, train=False, rng=None):
        self._shape = x.shape
        return x.reshape(x.shape[0], x.shape[1], -1)

    def backward(self, dout):
        return dout.reshape(self._shape)

    def output_shape(self, in_shape):
        return (in_shape[0], int(np.prod(in_shape[1:])))
