import numpy as np
import pytest

from comanip.tactile import (
    F_MAX,
    F_MIN,
    K_NORMAL,
    K_TANGENTIAL,
    ContactForce,
    FrictionModel,
    GripCommand,
    ShallowNet,
    TactileFrame,
    UntrainedNetworkError,
    deformation_to_force,
    modulate_grip,
    sense,
    slip_check,
    train_default_net,
    training_set,
)


@pytest.fixture(scope="module")
def net():
    return train_default_net(seed=0, n_samples=1200, epochs=3000)


def test_sense_zero_contact():
    rng = np.random.default_rng(0)
    frame = sense(0.0, (0.0, 0.0), rng=rng)
    assert np.max(np.abs(frame.taxels)) <= 3 * 0.02 + 1e-9


def test_sense_normal_elastic_formula():
    frame = sense(5.0, (0.0, 0.0), rng=None)
    assert frame.grid_mean()[0] == pytest.approx(10.0)  # 5/500 m = 10 mm
    assert frame.grid_mean()[1] == pytest.approx(0.0)


def test_sense_shear_elastic_formula():
    frame = sense(0.0, (3.0, 0.0), rng=None)
    assert frame.grid_mean()[1] == pytest.approx(10.0)  # 3/300 m = 10 mm


def test_sense_deterministic_with_seed():
    a = sense(4.0, (1.0, -2.0), rng=np.random.default_rng(7))
    b = sense(4.0, (1.0, -2.0), rng=np.random.default_rng(7))
    assert a.taxels.tobytes() == b.taxels.tobytes()


def test_frame_range_enforced():
    with pytest.raises(ValueError):
        TactileFrame(np.full((4, 4, 3), 100.0))


def test_predict_zero_frame_is_exactly_zero(net):
    y = net.predict(TactileFrame.zero())
    assert np.all(y == 0.0)
    force = deformation_to_force(net, TactileFrame.zero())
    assert force.normal == 0.0
    assert np.all(force.tangential == 0.0)


def test_untrained_network_rejected():
    with pytest.raises(UntrainedNetworkError):
        ShallowNet().predict(TactileFrame.zero())


def test_noise_free_frames_recovered_within_5pct(net):
    rng = np.random.default_rng(3)
    for _ in range(50):
        f_n = rng.uniform(0, 20)
        f_t = rng.uniform(-8, 8, 2)
        est = deformation_to_force(net, sense(f_n, f_t, rng=None))
        assert abs(est.normal - f_n) < 0.05 * 20.0
        assert np.max(np.abs(est.tangential - f_t)) < 0.05 * 8.0


def test_holdout_rmse_below_5pct(net):
    X, Y = training_set(400, seed=991)
    preds = np.array([net._predict_mean_mm(x) for x in X])
    rmse = np.sqrt(np.mean((preds - Y) ** 2, axis=0))
    assert rmse[0] < 0.05 * 20.0
    assert rmse[1] < 0.05 * 8.0
    assert rmse[2] < 0.05 * 8.0


def test_training_gradients_match_finite_differences():
    X, Y = training_set(40, seed=5)
    net = ShallowNet(seed=1)
    net.in_center = X.mean(axis=0)
    net.in_scale = X.std(axis=0)
    net.out_center = Y.mean(axis=0)
    net.out_scale = Y.std(axis=0)
    Xs = (X - net.in_center) / net.in_scale
    Ys = (Y - net.out_center) / net.out_scale
    rng = np.random.default_rng(2)
    theta = 0.3 * rng.standard_normal(3 * 5 + 5 + 5 * 3 + 3)
    _, grad = net.loss_and_grad(theta.copy(), Xs, Ys)
    h = 1e-6
    fd = np.empty_like(theta)
    for i in range(theta.size):
        tp, tm = theta.copy(), theta.copy()
        tp[i] += h
        tm[i] -= h
        lp, _ = net.loss_and_grad(tp, Xs, Ys)
        lm, _ = net.loss_and_grad(tm, Xs, Ys)
        fd[i] = (lp - lm) / (2 * h)
    denom = np.maximum(np.abs(fd), 1e-8)
    assert np.max(np.abs(grad - fd) / denom) < 1e-5


def test_fit_deterministic():
    X, Y = training_set(200, seed=8)
    a = ShallowNet(seed=3, epochs=300).fit(X, Y)
    b = ShallowNet(seed=3, epochs=300).fit(X, Y)
    assert a.pack().tobytes() == b.pack().tobytes()


def test_elastic_inverse_composition(net):
    rng = np.random.default_rng(4)
    for _ in range(50):
        f_n = rng.uniform(0, 20)
        f_t = rng.uniform(-8, 8, 2)
        frame = sense(f_n, f_t, rng=rng)
        est = deformation_to_force(net, frame)
        d_hat = np.array(
            [
                1000.0 * est.normal / K_NORMAL,
                1000.0 * est.tangential[0] / K_TANGENTIAL,
                1000.0 * est.tangential[1] / K_TANGENTIAL,
            ]
        )
        d = frame.grid_mean()
        # 7% of the displacement full scale spanned by the training envelope
        fs = np.array([1000.0 * 20 / K_NORMAL, 1000.0 * 8 / K_TANGENTIAL, 1000.0 * 8 / K_TANGENTIAL])
        assert np.all(np.abs(d_hat - d) < 0.07 * fs)


def test_slip_check_zero_shear_stable():
    fm = FrictionModel()
    for n in (0.0, 1.0, 10.0):
        assert slip_check(ContactForce(n, (0.0, 0.0)), fm) == "stable"


def test_slip_check_direct_inequality():
    fm = FrictionModel(mu=0.5)
    assert slip_check(ContactForce(10.0, (6.0, 0.0)), fm) == "slipping"
    assert slip_check(ContactForce(10.0, (4.0, 0.0)), fm) == "stable"


def test_slip_check_boundary_closed_cone():
    fm = FrictionModel(mu=0.5)
    assert slip_check(ContactForce(10.0, (5.0, 0.0)), fm) == "stable"


def test_slip_check_grid_matches_inequality():
    fm = FrictionModel(mu=0.5)
    normals = np.linspace(0, 40, 100)
    shears = np.linspace(-10, 10, 100)
    for n in normals:
        mags = np.abs(shears)
        verdicts = np.array([slip_check(ContactForce(n, (s, 0.0)), fm) == "slipping" for s in shears])
        assert np.array_equal(verdicts, mags > fm.mu * n)


def test_slip_check_scale_invariant():
    fm = FrictionModel(mu=0.5)
    rng = np.random.default_rng(6)
    for _ in range(100):
        n = rng.uniform(0.1, 20)
        t = rng.uniform(-10, 10, 2)
        s = rng.uniform(0.1, 50)
        assert slip_check(ContactForce(n, t), fm) == slip_check(ContactForce(s * n, s * t), fm)


def test_modulate_grip_floor():
    fm = FrictionModel()
    out = modulate_grip(ContactForce(5.0, (0.0, 0.0)), fm, GripCommand(1.0))
    assert out.target_normal_force == pytest.approx(F_MIN)


def test_modulate_grip_formula():
    fm = FrictionModel(mu=0.5, safety_factor=1.5)
    out = modulate_grip(ContactForce(10.0, (4.0, 0.0)), fm, GripCommand(F_MAX))
    assert out.target_normal_force == pytest.approx(12.0)  # 1.5 * 4 / 0.5


def test_modulate_grip_rate_limit():
    fm = FrictionModel(mu=0.5, safety_factor=1.5)
    out = modulate_grip(ContactForce(0.0, (4.0, 0.0)), fm, GripCommand(0.0))
    assert out.target_normal_force == pytest.approx(5.0)


def test_modulate_grip_clamps_to_max():
    fm = FrictionModel(mu=0.5, safety_factor=1.5)
    out = modulate_grip(ContactForce(0.0, (100.0, 0.0)), fm, GripCommand(39.0))
    assert out.target_normal_force == pytest.approx(F_MAX)


def test_closed_loop_holds_constant_load(net):
    fm = FrictionModel(mu=0.5, safety_factor=1.5)
    rng = np.random.default_rng(9)
    for load in np.linspace(0.4, fm.mu * F_MAX / fm.safety_factor, 12):
        grip = GripCommand(0.0)
        target = float(np.clip(fm.safety_factor * load / fm.mu, F_MIN, F_MAX))
        settle = int(np.ceil(target / 5.0))
        for tick in range(settle + 30):
            true_force = ContactForce(grip.target_normal_force, (load, 0.0))
            est = deformation_to_force(net, sense(true_force.normal, true_force.tangential, rng=rng))
            grip = modulate_grip(est, fm, grip)
            if tick >= settle:
                assert slip_check(ContactForce(grip.target_normal_force, (load, 0.0)), fm) == "stable"


def test_net_json_round_trip(tmp_path, net):
    path = tmp_path / "net.json"
    net.save(path)
    loaded = ShallowNet.load(path)
    frame = sense(3.0, (1.0, 1.0), rng=None)
    assert np.array_equal(loaded.predict(frame), net.predict(frame))


def test_grip_command_validation():
    with pytest.raises(ValueError):
        GripCommand(-1.0)
    with pytest.raises(ValueError):
        GripCommand(F_MAX + 1.0)


def test_contact_force_validation():
    with pytest.raises(ValueError):
        ContactForce(-1.0, (0.0, 0.0))
    with pytest.raises(ValueError):
        ContactForce(np.nan, (0.0, 0.0))
