"""
Tests for the particle dynamics
"""

import math
from unittest.mock import patch

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from src.corridor_sim import dynamics, neighbors
from src.corridor_sim.exceptions import DegenerateGeometryError, InvalidStateError, SetupError, StepSizeError
from src.corridor_sim.models import Arena, BoundaryRule, HeadingMode, ModelConfig, ModelKind
from src.corridor_sim.state import ParticleState, SwarmState, initialize_swarm
from tests.conftest import make_state


class TestWrapAngle:
    """Test angle wrapping into (-pi, pi]"""

    def test_pi_stays_pi(self):
        """pi is inside the interval and -pi maps onto it"""
        assert dynamics.wrap_angle(np.pi) == pytest.approx(np.pi)
        assert dynamics.wrap_angle(-np.pi) == pytest.approx(np.pi)

    def test_wraps_large_angles(self):
        """Angles outside the interval are shifted by multiples of 2 pi"""
        assert dynamics.wrap_angle(1.5 * np.pi) == pytest.approx(-0.5 * np.pi)
        assert dynamics.wrap_angle(5.0) == pytest.approx(5.0 - 2 * np.pi)

    def test_array_input(self):
        """Arrays are wrapped element-wise"""
        wrapped = dynamics.wrap_angle(np.array([0.0, 3 * np.pi, -3.5]))
        assert np.all(wrapped > -np.pi) and np.all(wrapped <= np.pi)


class TestVicsekHeading:
    """Test the self-inclusive circular mean"""

    def test_single_particle_keeps_heading(self):
        """A particle that is its own only neighbour keeps its heading without noise"""
        state = make_state([[1.0, 1.0]], [0.3])
        assert dynamics.vicsek_heading(0, state, [0], 0.0) == pytest.approx(0.3)

    def test_symmetric_pair_averages_to_zero(self):
        """Headings +pi/4 and -pi/4 average to 0"""
        state = make_state([[1.0, 1.0], [1.5, 1.0]], [np.pi / 4, -np.pi / 4])
        assert dynamics.vicsek_heading(0, state, [0, 1], 0.0) == pytest.approx(0.0, abs=1e-15)

    def test_three_neighbours_with_noise(self):
        """Headings {0, pi/2, pi/2} plus noise 0.1 give atan2(2, 1) + 0.1"""
        state = make_state([[1.0, 1.0], [1.2, 1.0], [1.4, 1.0]], [0.0, np.pi / 2, np.pi / 2])
        result = dynamics.vicsek_heading(0, state, [0, 1, 2], 0.1)
        assert result == pytest.approx(math.atan2(2.0, 1.0) + 0.1)
        assert result == pytest.approx(1.2071, abs=1e-4)

    def test_antiparallel_keeps_own_heading(self):
        """A vanishing resultant keeps the previous heading"""
        state = make_state([[1.0, 1.0], [1.5, 1.0]], [0.0, np.pi])
        assert dynamics.vicsek_heading(0, state, [0, 1], 0.2) == pytest.approx(0.2)


class TestDesiredDirection:
    """Test the desired-direction transform"""

    def test_halves_deviation(self):
        """theta = 0.8, theta_des = 0.4 gives 0.2"""
        assert dynamics.apply_desired_direction(0.8, 0.4) == pytest.approx(0.2)

    def test_geometric_convergence_toward_exit(self):
        """With theta_des = 0 and no noise a lone particle's heading halves every step"""
        arena = Arena(lx=20.0, ly=4.5)
        cfg = ModelConfig(model=ModelKind.VM_DD, eta=0.0)
        state = make_state([[5.0, 2.0]], [2.5])
        for k in range(1, 26):
            state = dynamics.step_vm(state, arena, cfg, noise=np.zeros(1))
            assert state.headings[0] == pytest.approx(2.5 / 2 ** k, rel=1e-9, abs=1e-12)
        assert abs(state.headings[0]) < 1e-6


class TestSocialForces:
    """Test the pairwise and wall force laws"""

    def test_desire_force_examples(self):
        """Desire force at v_D, at rest and off-axis"""
        cfg = ModelConfig(model=ModelKind.SFM)
        cruising = ParticleState(position=[1.0, 1.0], velocity=[0.5, 0.0], heading=0.0)
        at_rest = ParticleState(position=[1.0, 1.0], velocity=[0.0, 0.0], heading=0.0)
        diagonal = ParticleState(position=[1.0, 1.0], velocity=[0.5, 0.5], heading=np.pi / 4)

        np.testing.assert_allclose(dynamics.desire_force(cruising, cfg), [0.0, 0.0])
        np.testing.assert_allclose(dynamics.desire_force(at_rest, cfg), [80.0, 0.0])
        np.testing.assert_allclose(dynamics.desire_force(diagonal, cfg), [0.0, -80.0])

    def test_social_force_values(self):
        """A at contact, A/e one range further out, and nearly nothing at 1.5 m"""
        cfg = ModelConfig(model=ModelKind.SFM)
        normal = np.array([1.0, 0.0])
        assert dynamics.social_force_pair(0.7, normal, cfg)[0] == pytest.approx(2000.0)
        assert dynamics.social_force_pair(0.78, normal, cfg)[0] == pytest.approx(2000.0 / math.e)
        assert dynamics.social_force_pair(1.5, normal, cfg)[0] == pytest.approx(0.0908, abs=1e-4)

    def test_coincident_centres_rejected(self):
        """The scalar force laws need a direction"""
        cfg = ModelConfig(model=ModelKind.SFM)
        with pytest.raises(DegenerateGeometryError):
            dynamics.social_force_pair(0.0, [1.0, 0.0], cfg)
        with pytest.raises(DegenerateGeometryError):
            dynamics.granular_force_pair(0.0, [1.0, 0.0], [0.0, 1.0], 0.0, cfg)

    def test_granular_force_values(self):
        """No contact force without overlap; k and kappa scale with the overlap"""
        cfg = ModelConfig(model=ModelKind.SFM)
        n, t = np.array([1.0, 0.0]), np.array([0.0, 1.0])

        np.testing.assert_array_equal(dynamics.granular_force_pair(0.8, n, t, 0.0, cfg), [0.0, 0.0])
        static = dynamics.granular_force_pair(0.6, n, t, 0.0, cfg)
        assert static[0] == pytest.approx(1.2e4, rel=1e-9)
        sliding = dynamics.granular_force_pair(0.6, n, t, 1.0, cfg)
        assert sliding[1] == pytest.approx(2.4e4, rel=1e-9)

    def test_wall_social_force_near_bottom(self, walled_arena):
        """At y = d/2 the bottom wall pushes with A and the far wall is negligible"""
        cfg = ModelConfig(model=ModelKind.SFM)
        p = ParticleState(position=[10.0, 0.35], velocity=[0.0, 0.0], heading=0.0)
        force = dynamics.wall_forces(p, walled_arena, cfg)
        assert force[1] == pytest.approx(2000.0, rel=1e-9)
        assert force[0] == 0.0

    def test_wall_forces_cancel_on_midline(self, walled_arena):
        """Equal distances to both walls give zero net wall force"""
        cfg = ModelConfig(model=ModelKind.SFM)
        p = ParticleState(position=[10.0, 2.25], velocity=[0.0, 0.0], heading=0.0)
        np.testing.assert_allclose(dynamics.wall_forces(p, walled_arena, cfg), [0.0, 0.0], atol=1e-12)

    def test_wall_contact_compression(self, walled_arena):
        """Overlapping the wall by 0.05 m adds k * 0.05 to the social push"""
        cfg = ModelConfig(model=ModelKind.SFM)
        p = ParticleState(position=[10.0, 0.3], velocity=[0.0, 0.0], heading=0.0)
        expected = 2000.0 * np.exp(0.05 / 0.08) + 1.2e5 * 0.05
        assert dynamics.wall_forces(p, walled_arena, cfg)[1] == pytest.approx(expected, rel=1e-9)

    def test_wall_friction_opposes_motion(self, walled_arena):
        """Sliding along the wall in contact gives -kappa * overlap along x"""
        cfg = ModelConfig(model=ModelKind.SFM)
        p = ParticleState(position=[10.0, 0.3], velocity=[0.5, 0.0], heading=0.0)
        assert dynamics.wall_forces(p, walled_arena, cfg)[0] == pytest.approx(-2.4e5 * 0.05, rel=1e-9)

    def test_particle_outside_corridor_rejected(self, walled_arena):
        """Wall forces are undefined for y outside [0, Ly]"""
        cfg = ModelConfig(model=ModelKind.SFM)
        p = ParticleState(position=[10.0, -0.1], velocity=[0.0, 0.0], heading=0.0)
        with pytest.raises(InvalidStateError):
            dynamics.wall_forces(p, walled_arena, cfg)

    @settings(max_examples=200, deadline=None)
    @given(
        st.floats(0.0, 9.99), st.floats(0.0, 4.49), st.floats(0.0, 9.99), st.floats(0.0, 4.49),
        st.floats(-1.0, 1.0), st.floats(-1.0, 1.0), st.floats(-1.0, 1.0), st.floats(-1.0, 1.0),
    )
    def test_pair_forces_are_antisymmetric(self, x0, y0, x1, y1, vx0, vy0, vx1, vy1):
        """Social and granular forces obey action and reaction"""
        arena = Arena(lx=10.0, ly=4.5)
        cfg = ModelConfig(model=ModelKind.SFM)
        positions = np.array([[x0, y0], [x1, y1]])
        velocities = np.array([[vx0, vy0], [vx1, vy1]])
        forces = dynamics.pair_forces(positions, velocities, np.array([0, 1]), np.array([1, 0]), arena, cfg)
        np.testing.assert_allclose(forces[0] + forces[1], [0.0, 0.0], atol=1e-9)


class TestSfmAcceleration:
    """Test the assembled right-hand side"""

    def test_resting_particle_on_midline(self, walled_arena):
        """Only the desire force acts: (v_D / tau, 0)"""
        cfg = ModelConfig(model=ModelKind.SFM)
        state = make_state([[10.0, 2.25]], velocities=[[0.0, 0.0]])
        acc = dynamics.sfm_acceleration(0, state, walled_arena, cfg)
        np.testing.assert_allclose(acc, [1.0, 0.0], atol=1e-6)

    def test_cruising_particle_is_unforced(self, walled_arena):
        """At v = v_D e on the midline the acceleration vanishes"""
        cfg = ModelConfig(model=ModelKind.SFM)
        state = make_state([[10.0, 2.25]], velocities=[[0.5, 0.0]])
        np.testing.assert_allclose(dynamics.sfm_accelerations(state, walled_arena, cfg), [[0.0, 0.0]], atol=1e-9)

    def test_touching_pair_repels(self, walled_arena):
        """Two resting particles at contact push each other apart with A / m"""
        cfg = ModelConfig(model=ModelKind.SFM)
        state = make_state([[10.0, 2.25], [10.7, 2.25]], velocities=[[0.0, 0.0], [0.0, 0.0]])
        acc = dynamics.sfm_accelerations(state, walled_arena, cfg)
        assert acc[0, 0] - 1.0 == pytest.approx(-25.0, rel=1e-6)
        assert acc[1, 0] - 1.0 == pytest.approx(25.0, rel=1e-6)

    def test_cell_grid_matches_direct_sum(self):
        """Neighbour-gathered accelerations agree with the O(N^2) per-particle sum"""
        arena = Arena(lx=20.0, ly=4.5, bc_y=BoundaryRule.BOUNCE_BACK)
        cfg = ModelConfig(model=ModelKind.SFM)
        rng = np.random.default_rng(11)
        positions = np.column_stack((rng.uniform(0, 20, 30), rng.uniform(0.4, 4.1, 30)))
        velocities = rng.uniform(-0.5, 0.5, (30, 2))
        state = make_state(positions, velocities=velocities)

        gathered = dynamics.sfm_accelerations(state, arena, cfg)
        direct = np.array([dynamics.sfm_acceleration(i, state, arena, cfg) for i in range(state.n)])
        all_pairs = dynamics.sfm_accelerations(state, arena, cfg, all_pairs=True)

        np.testing.assert_allclose(gathered, direct, rtol=1e-9, atol=1e-6)
        np.testing.assert_allclose(all_pairs, direct, rtol=1e-9, atol=1e-6)

    def test_coincident_centres_resolved(self, walled_arena):
        """Coincident particles are pushed apart along x by index order"""
        cfg = ModelConfig(model=ModelKind.SFM)
        state = make_state([[10.0, 2.25], [10.0, 2.25]], velocities=[[0.0, 0.0], [0.0, 0.0]])
        acc = dynamics.sfm_accelerations(state, walled_arena, cfg)
        assert acc[0, 0] < 0.0 < acc[1, 0]
        assert np.all(np.isfinite(acc))


class TestBoundaries:
    """Test periodic wrapping and bounce-back reflection"""

    def test_periodic_wrap(self, periodic_arena):
        """x = 601.2 wraps to 1.2"""
        positions, _, _ = dynamics.enforce_boundaries(
            np.array([[601.2, 1.0]]), np.array([[0.5, 0.0]]), np.array([0.0]), periodic_arena
        )
        assert positions[0, 0] == pytest.approx(1.2, abs=1e-9)

    def test_bounce_below_floor(self, walled_arena):
        """y = -0.3 moving down reflects to 0.3 moving up"""
        p = ParticleState(position=[10.0, -0.3], velocity=[0.0, -1.0], heading=-np.pi / 2)
        bounced = dynamics.apply_boundary(p, walled_arena)
        assert bounced.position[1] == pytest.approx(0.3)
        np.testing.assert_allclose(bounced.velocity, [0.0, 1.0])
        assert bounced.heading == pytest.approx(np.pi / 2)

    def test_bounce_above_ceiling(self, walled_arena):
        """y = 4.6 with v = (0.3, 0.4) reflects to y = 4.4, v = (0.3, -0.4)"""
        p = ParticleState(position=[10.0, 4.6], velocity=[0.3, 0.4], heading=math.atan2(0.4, 0.3))
        bounced = dynamics.apply_boundary(p, walled_arena)
        assert bounced.position[1] == pytest.approx(4.4)
        np.testing.assert_allclose(bounced.velocity, [0.3, -0.4])
        assert bounced.speed == pytest.approx(0.5)

    def test_unreflected_heading_untouched(self, walled_arena):
        """Particles inside the corridor keep their heading exactly"""
        _, _, headings = dynamics.enforce_boundaries(
            np.array([[10.0, 2.0]]), np.array([[0.5, 0.0]]), np.array([0.123]), walled_arena
        )
        assert headings[0] == 0.123

    def test_escape_beyond_one_box_rejected(self, periodic_arena):
        """Moving further than a box length in one step is an error"""
        with pytest.raises(StepSizeError):
            dynamics.enforce_boundaries(
                np.array([[1300.0, 1.0]]), np.array([[0.5, 0.0]]), np.array([0.0]), periodic_arena
            )

    @settings(max_examples=200, deadline=None)
    @given(
        st.floats(0.01, 4.49) | st.floats(4.51, 8.99),
        st.floats(-2.0, 2.0),
        st.floats(-2.0, 2.0),
    )
    def test_reflection_is_elastic(self, y, vx, vy):
        """Reflection keeps the speed and the tangential component"""
        arena = Arena(lx=20.0, ly=4.5, bc_y=BoundaryRule.BOUNCE_BACK)
        y = -y if y < 4.5 else y
        positions, velocities, _ = dynamics.enforce_boundaries(
            np.array([[5.0, y]]), np.array([[vx, vy]]), np.array([0.0]), arena
        )
        assert 0.0 <= positions[0, 1] <= 4.5
        assert velocities[0, 0] == vx
        assert np.hypot(*velocities[0]) == np.hypot(vx, vy)


class TestVicsekStep:
    """Test the Vicsek family update"""

    def test_lone_particle_moves_forward(self, periodic_arena, vm_config):
        """Heading 0 at (10, 2) moves to (10.5, 2)"""
        state = make_state([[10.0, 2.0]], [0.0])
        out = dynamics.step_vm(state, periodic_arena, vm_config, rng=np.random.default_rng(0))
        np.testing.assert_allclose(out.positions, [[10.5, 2.0]])
        assert out.time == 1

    def test_mutual_neighbours_align(self, periodic_arena, vm_config):
        """Headings 0 and pi/2 both become pi/4"""
        state = make_state([[10.0, 2.0], [10.5, 2.0]], [0.0, np.pi / 2])
        out = dynamics.step_vm(state, periodic_arena, vm_config, noise=np.zeros(2))
        np.testing.assert_allclose(out.headings, [np.pi / 4, np.pi / 4])

    def test_aligned_swarm_translates_rigidly(self, periodic_arena, vm_config):
        """Identical headings without noise stay identical and shift by v0 dt"""
        rng = np.random.default_rng(3)
        positions = np.column_stack((rng.uniform(0, 600, 300), rng.uniform(0, 4.5, 300)))
        state = make_state(positions, np.full(300, 0.7))
        out = dynamics.step_vm(state, periodic_arena, vm_config, noise=np.zeros(300))

        np.testing.assert_allclose(out.headings, 0.7, atol=1e-12)
        shift = dynamics.neighbors.minimum_image(out.positions - state.positions, periodic_arena)
        np.testing.assert_allclose(shift, np.tile([0.5 * np.cos(0.7), 0.5 * np.sin(0.7)], (300, 1)), atol=1e-9)

    def test_ordered_state_is_a_fixed_point(self, periodic_arena, vm_config):
        """phi stays 1 under eta = 0"""
        rng = np.random.default_rng(5)
        positions = np.column_stack((rng.uniform(0, 600, 100), rng.uniform(0, 4.5, 100)))
        state = make_state(positions, np.zeros(100))
        for _ in range(20):
            state = dynamics.step_vm(state, periodic_arena, vm_config, rng=rng)
        assert np.hypot(*state.velocities.sum(axis=0)) / (100 * 0.5) == pytest.approx(1.0, abs=1e-12)

    def test_relabelling_commutes_with_step(self, vm_config):
        """Permuting particles (and their noise draws) permutes the result"""
        arena = Arena(lx=10.0, ly=4.5)
        cfg = ModelConfig(model=ModelKind.VM, eta=0.3)
        rng = np.random.default_rng(8)
        positions = np.column_stack((rng.uniform(0, 10, 60), rng.uniform(0, 4.5, 60)))
        state = make_state(positions, rng.uniform(-np.pi, np.pi, 60))
        noise = dynamics.draw_noise(60, cfg, rng)
        perm = rng.permutation(60)

        out = dynamics.step_vm(state, arena, cfg, noise=noise)
        out_perm = dynamics.step_vm(state.permuted(perm), arena, cfg, noise=noise[perm])

        np.testing.assert_allclose(out_perm.velocities, out.velocities[perm], atol=1e-12)
        np.testing.assert_allclose(out_perm.positions, out.positions[perm], atol=1e-9)

    @pytest.mark.parametrize("model", [ModelKind.VM, ModelKind.VM_DD, ModelKind.SFM_VM])
    def test_speed_is_renormalised(self, model):
        """Every Vicsek-family step leaves |v_i| = v0"""
        arena = Arena(lx=60.0, ly=4.5, bc_y=BoundaryRule.BOUNCE_BACK)
        cfg = ModelConfig(model=model, eta=0.1)
        rng = np.random.default_rng(21)
        state = initialize_swarm(50, arena, cfg, rng)
        for _ in range(5):
            state = dynamics.advance(state, arena, cfg, rng)
            np.testing.assert_allclose(state.speeds(), 0.5, rtol=1e-12)


class TestSfmStep:
    """Test Euler sub-stepping of the social force model"""

    def test_relaxation_toward_desired_speed(self, walled_arena, sfm_config):
        """A resting particle reaches about (1 - 1/e) of v_D after one relaxation time"""
        state = make_state([[10.0, 2.25]], velocities=[[0.0, 0.0]])
        out = dynamics.step_sfm(state, walled_arena, sfm_config)
        assert out.speeds()[0] / 0.5 == pytest.approx(1.0 - math.exp(-2.0), rel=0.01)
        assert out.positions[0, 1] == 2.25

    def test_cruising_particle_translates(self, walled_arena, sfm_config):
        """v = v_D e moves by v_D dt along x"""
        state = make_state([[10.0, 2.25]], velocities=[[0.5, 0.0]])
        out = dynamics.step_sfm(state, walled_arena, sfm_config)
        np.testing.assert_allclose(out.positions, [[10.5, 2.25]], atol=1e-6)
        np.testing.assert_allclose(out.velocities, [[0.5, 0.0]], atol=1e-9)

    def test_overlapping_pair_separates(self, walled_arena):
        """Pair forces cancel in the total momentum change; only the desire force remains"""
        cfg = ModelConfig(model=ModelKind.SFM, dt=0.01, substeps=1)
        state = make_state([[10.0, 2.25], [10.5, 2.25]], velocities=[[0.0, 0.0], [0.0, 0.0]])
        out = dynamics.step_sfm(state, walled_arena, cfg)

        assert out.velocities[0, 0] < 0.0 < out.velocities[1, 0]
        assert out.velocities[0, 0] + out.velocities[1, 0] == pytest.approx(2 * 0.01 * 1.0, rel=1e-6)
        assert out.positions[1, 0] - out.positions[0, 0] > 0.5

    def test_speed_is_not_renormalised(self, walled_arena, sfm_config):
        """The social force model lets speeds differ from v0"""
        state = make_state([[10.0, 2.25]], velocities=[[0.0, 0.0]])
        out = dynamics.advance(state, walled_arena, sfm_config)
        assert out.speeds()[0] != pytest.approx(0.5)
        assert out.time == 1


class TestInitialization:
    """Test the insertion protocol"""

    def test_vicsek_insertion_region(self, periodic_arena, vm_config):
        """VM particles start in the first half of the corridor with speed v0"""
        state = initialize_swarm(300, periodic_arena, vm_config, np.random.default_rng(1))
        assert state.n == 300
        assert np.all(state.positions[:, 0] < 300.0)
        assert np.all((state.positions[:, 1] >= 0.0) & (state.positions[:, 1] <= 4.5))
        assert np.all((state.headings > -np.pi) & (state.headings <= np.pi))
        np.testing.assert_allclose(state.speeds(), 0.5)

    def test_aligned_headings(self, periodic_arena, vm_config):
        """Aligned insertion points every particle along +x"""
        state = initialize_swarm(50, periodic_arena, vm_config, np.random.default_rng(1), HeadingMode.ALIGNED)
        np.testing.assert_array_equal(state.headings, 0.0)

    def test_social_force_insertion_is_overlap_free(self, walled_arena, sfm_config):
        """SFM particles start at least one diameter apart, clear of the walls, heading +x"""
        state = initialize_swarm(300, walled_arena, sfm_config, np.random.default_rng(2))
        delta = state.positions[:, None, :] - state.positions[None, :, :]
        distance = np.hypot(delta[..., 0], delta[..., 1])
        np.fill_diagonal(distance, np.inf)
        assert distance.min() >= 0.7
        assert np.all((state.positions[:, 1] >= 0.35) & (state.positions[:, 1] <= 4.15))
        np.testing.assert_array_equal(state.headings, 0.0)

    def test_overcrowded_insertion_fails(self, sfm_config):
        """An impossible density raises SetupError naming the density"""
        arena = Arena(lx=4.0, ly=1.5, bc_y=BoundaryRule.BOUNCE_BACK)
        with patch("src.corridor_sim.state.MAX_PLACEMENT_ATTEMPTS", 500):
            with pytest.raises(SetupError, match="density"):
                initialize_swarm(40, arena, sfm_config, np.random.default_rng(0))

    def test_state_arrays_are_read_only(self, periodic_arena, vm_config):
        """Steps never mutate an existing state"""
        state = initialize_swarm(10, periodic_arena, vm_config, np.random.default_rng(1))
        with pytest.raises(ValueError):
            state.positions[0, 0] = 1.0
        assert isinstance(state, SwarmState)


class TestSfmPairList:
    """Test the pair list kept across the sub-steps of one social-force step"""

    def test_skin_leaves_the_step_unchanged(self):
        """A skinned list gives the same step as a fresh search at every sub-step, with fewer grid builds"""
        arena = Arena(lx=30.0, ly=4.5, bc_y=BoundaryRule.BOUNCE_BACK)
        skinned = ModelConfig(model=ModelKind.SFM, neighbor_skin=1.0)
        fresh = ModelConfig(model=ModelKind.SFM, neighbor_skin=0.0)
        state = initialize_swarm(30, arena, skinned, np.random.default_rng(5))

        with patch("src.corridor_sim.neighbors.build", wraps=neighbors.build) as build:
            out = state
            for _ in range(3):
                out = dynamics.step_sfm(out, arena, skinned)
            skinned_builds = build.call_count

        reference = state
        for _ in range(3):
            reference = dynamics.step_sfm(reference, arena, fresh)

        np.testing.assert_array_equal(out.positions, reference.positions)
        np.testing.assert_array_equal(out.velocities, reference.velocities)
        assert skinned_builds < 3 * skinned.substeps

    def test_explicit_pairs_match_grid_search(self, walled_arena):
        cfg = ModelConfig(model=ModelKind.SFM)
        state = make_state([[10.0, 2.25], [10.7, 2.25], [14.0, 1.0]], velocities=np.zeros((3, 2)))
        grid = neighbors.build(state, walled_arena, cfg.social_cutoff)
        pairs = neighbors.pairs_within(grid, cfg.social_cutoff)
        np.testing.assert_array_equal(
            dynamics.sfm_accelerations(state, walled_arena, cfg, pairs=pairs),
            dynamics.sfm_accelerations(state, walled_arena, cfg),
        )


class TestSwarmStateConversion:
    """Test conversion between the array state and per-particle records"""

    def test_particles_round_trip(self, periodic_arena, vm_config):
        state = initialize_swarm(12, periodic_arena, vm_config, np.random.default_rng(3))
        particles = state.particles()
        assert len(particles) == 12
        assert particles[4].heading == pytest.approx(state.headings[4])

        rebuilt = SwarmState.from_particles(particles, time=state.time)
        np.testing.assert_array_equal(rebuilt.positions, state.positions)
        np.testing.assert_array_equal(rebuilt.velocities, state.velocities)
        np.testing.assert_array_equal(rebuilt.headings, state.headings)
        assert (rebuilt.mass, rebuilt.diameter) == (state.mass, state.diameter)

    def test_empty_particle_list(self):
        state = SwarmState.from_particles([], time=4)
        assert state.n == 0
        assert state.time == 4
        assert state.positions.shape == (0, 2)
