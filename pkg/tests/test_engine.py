import io
import json
import math

import numpy as np
import pytest

from core.analysis import fit_decay_rate, sync_report
from core.engine import BODY_COLUMNS, LOAD_COLUMNS, SimConfig, TimedEvent, rk4_step
from core.errors import DomainError, SimulationAborted
from core.exporter import CsvRowWriter
from core.scenario import loads_scenario, parse_scenario


def decay(t, y):
    return -y


def run_exponential(dt, seconds=1.0):
    y = np.array([1.0])
    for step in range(int(round(seconds / dt))):
        y = rk4_step(decay, step * dt, y, dt)
    return float(y[0])


class TestRk4:
    def test_exponential_decay(self):
        assert run_exponential(0.01, 0.1) == pytest.approx(0.90483742, abs=1e-8)

    def test_fourth_order_convergence(self):
        coarse = abs(run_exponential(0.1) - math.exp(-1.0))
        fine = abs(run_exponential(0.05) - math.exp(-1.0))
        assert math.log2(coarse / fine) >= 3.9

    def test_non_finite_result_aborts(self):
        with pytest.raises(SimulationAborted) as exc:
            rk4_step(lambda t, y: np.array([math.inf]), 0.0, np.array([1.0]), 0.1)
        assert exc.value.subsystem == "sim-engine"

    def test_rejects_non_positive_step(self):
        with pytest.raises(DomainError):
            rk4_step(decay, 0.0, np.array([1.0]), 0.0)


class TestSimConfig:
    def test_step_count(self):
        assert SimConfig(dt=1e-3, duration=25.0).steps == 25000

    def test_events_snap_to_nearest_step(self):
        config = SimConfig(dt=1e-3, duration=1.0)
        assert config.event_step(TimedEvent(0.0104, "set_bank", 0.1)) == 10
        assert config.event_step(TimedEvent(0.0106, "set_bank", 0.1)) == 11

    def test_events_are_sorted(self):
        config = SimConfig(events=(TimedEvent(2.0, "set_bank", 0.0), TimedEvent(1.0, "set_bank", 0.5)))
        assert [e.t for e in config.events] == [1.0, 2.0]

    def test_validation(self):
        with pytest.raises(DomainError):
            SimConfig(dt=0.0)
        with pytest.raises(DomainError):
            SimConfig(duration=-1.0)
        with pytest.raises(DomainError):
            SimConfig(record_stride=0)
        with pytest.raises(DomainError):
            TimedEvent(1.0, "loop_the_loop")


class TestSimulation:
    def test_zero_duration_writes_header_only(self, scenarios_dir):
        scenario = parse_scenario(str(scenarios_dir / "two_node.json")).with_sim(duration=0.0)
        stream = io.StringIO()
        result = scenario.build_simulation().run(CsvRowWriter(stream))
        assert result.rows == []
        assert not result.aborted
        lines = [line for line in stream.getvalue().splitlines() if not line.startswith("#")]
        assert len(lines) == 1
        assert lines[0].split(",")[:3] == ["t", "mode", "sigma"]

    def test_record_stride(self, scenarios_dir):
        scenario = parse_scenario(str(scenarios_dir / "two_node.json")).with_sim(duration=0.2, record_stride=10)
        result = scenario.build_simulation().run()
        assert len(result.rows) == 21
        np.testing.assert_allclose(result.column("t")[:3], [0.0, 0.01, 0.02])
        assert result.steps_completed == 200

    def test_columns(self, scenarios_dir):
        simulation = parse_scenario(str(scenarios_dir / "reference_flight.json")).build_simulation()
        columns = simulation.columns
        assert columns[:9] == ["t", "mode", "sigma", "omega", "k", "delta32_deg", "rho3_deg", "rho7_deg",
                               "sync_error"]
        assert "u8_deg" in columns and "v8_deg" in columns
        assert "left_psi_rate_dps" in columns
        for name in BODY_COLUMNS:
            assert name in columns
        assert len(set(columns)) == len(columns)

    def test_two_node_network_synchronizes(self, scenarios_dir):
        scenario = parse_scenario(str(scenarios_dir / "two_node.json"))
        result = scenario.build_simulation().run()
        errors = result.column("sync_error")
        assert errors[0] > 1e-3
        assert errors[-1] < 1e-6 * scenario.radii()[0]

    def test_wing_network_synchronization(self, scenarios_dir):
        """Sync error from a random start, sampled every 10 ms for 3 s."""
        scenario = parse_scenario(str(scenarios_dir / "config_a_sync.json"))
        result = scenario.build_simulation().run()
        times, errors = result.column("t"), result.column("sync_error")
        assert errors[-1] < 1e-6 * scenario.radii()[0]

        after = errors[(times >= 0.2) & (errors > 1e-10)]
        assert len(after) > 5
        assert np.all(np.diff(after) < 0.0)

        report = sync_report(scenario.network_topology(), scenario.radii(), scenario.oscillators.lambda_flap)
        assert report.satisfied
        assert fit_decay_rate(times, errors) > report.contraction_rate

    def test_events_reach_the_controller(self, two_node_document):
        two_node_document["events"] = [{"t": 0.0104, "action": "set_bank", "value": 10.0}]
        scenario = loads_scenario(json.dumps(two_node_document)).with_sim(duration=0.05)
        simulation = scenario.build_simulation()
        simulation.run()
        assert simulation.controller.state.turn_command == pytest.approx(math.radians(10.0))

    def test_runaway_network_aborts_in_oscillator_network(self, sync_document):
        sync_document["topology"]["k"] = 1e9
        scenario = loads_scenario(json.dumps(sync_document))
        stream = io.StringIO()
        result = scenario.build_simulation().run(CsvRowWriter(stream))
        assert result.aborted
        assert result.error.subsystem == "oscillator-network"
        assert "# error: " in stream.getvalue()

    def test_abort_keeps_recorded_rows(self, two_node_document):
        two_node_document["vehicle"] = {"enabled": True, "initial": {
            "velocity": [0.0, 0.0, 0.0], "rates_dps": [0.0, 100.0, 0.0], "euler_deg": [0.0, 80.0, 0.0]}}
        scenario = loads_scenario(json.dumps(two_node_document))
        result = scenario.build_simulation().run()
        assert result.aborted
        assert result.error.subsystem == "vehicle-dynamics"
        assert 0.05 < result.error.t < 0.1
        assert len(result.rows) >= 5
        assert result.final_state is not None

    def test_glide_to_flap_switch_reseeds_the_network(self, scenarios_dir):
        document = json.loads((scenarios_dir / "reference_flight.json").read_text(encoding="utf-8"))
        document["vehicle"]["initial"]["position"] = [0.0, 0.0, -4.9]
        document["events"] = []
        scenario = loads_scenario(json.dumps(document)).with_sim(duration=0.2)
        result = scenario.build_simulation().run()
        assert not result.aborted
        assert result.transitions[0] == (0.0, "gliding", "flapping")
        assert result.column("mode")[0] == "flapping"
        assert result.column("sync_error")[0] < 1e-9
        # the right flap oscillator sits on its 50 deg limit cycle
        u1, v1 = result.column("u1_deg")[0], result.column("v1_deg")[0]
        assert math.hypot(u1, v1) == pytest.approx(50.0)

    def test_gliding_oscillators_follow_the_moving_biases(self, scenarios_dir):
        document = json.loads((scenarios_dir / "reference_flight.json").read_text(encoding="utf-8"))
        document["events"] = []
        simulation = loads_scenario(json.dumps(document)).with_sim(duration=0.1).build_simulation()
        result = simulation.run()
        assert not result.aborted
        assert set(result.column("mode")) == {"gliding"}
        final = result.final_state
        bias = simulation.controller.command(final.body, final.integrators).bias
        assert abs(bias[2] - math.radians(-5.0)) > 1e-4
        np.testing.assert_allclose(final.cpg[:, 0], bias, atol=1e-9)
        np.testing.assert_allclose(final.cpg[:, 1], 0.0, atol=1e-9)

    def test_flow_angle_rates_change_the_rotational_loads(self, scenarios_dir):
        document = json.loads((scenarios_dir / "reference_flight.json").read_text(encoding="utf-8"))
        document["vehicle"]["initial"]["position"] = [0.0, 0.0, -4.9]
        document["events"] = []
        loads = {}
        for mode in ("pitch", "flow"):
            document["aero"]["alpha_rate"] = mode
            scenario = loads_scenario(json.dumps(document)).with_sim(duration=0.05)
            result = scenario.build_simulation().run()
            assert not result.aborted
            assert result.column("mode")[-1] == "flapping"
            loads[mode] = np.column_stack([result.column(c) for c in LOAD_COLUMNS]).astype(float)
            assert np.all(np.isfinite(loads[mode]))
        assert loads["flow"].shape == loads["pitch"].shape
        assert not np.allclose(loads["flow"][:, 2], loads["pitch"][:, 2])

    def test_fresh_simulations_do_not_share_controller_state(self, scenarios_dir):
        scenario = parse_scenario(str(scenarios_dir / "two_node.json"))
        first, second = scenario.build_simulation(), scenario.build_simulation()
        first.controller.apply_event("set_bank", 0.5)
        assert second.controller.state.turn_command == 0.0

    def test_runs_are_reproducible(self, scenarios_dir):
        scenario = parse_scenario(str(scenarios_dir / "two_node.json")).with_sim(duration=0.3)
        outputs = []
        for _ in range(2):
            stream = io.StringIO()
            scenario.build_simulation().run(CsvRowWriter(stream, {"scenario": scenario.name}))
            outputs.append(stream.getvalue())
        assert outputs[0] == outputs[1]
