# vim: set filetype=python fileencoding=utf-8:
# -*- coding: utf-8 -*-

#============================================================================#
#                                                                            #
#  Licensed under the Apache License, Version 2.0 (the "License");           #
#  you may not use this file except in compliance with the License.          #
#  You may obtain a copy of the License at                                   #
#                                                                            #
#      http://www.apache.org/licenses/LICENSE-2.0                            #
#                                                                            #
#  Unless required by applicable law or agreed to in writing, software       #
#  distributed under the License is distributed on an "AS IS" BASIS,         #
#  WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.  #
#  See the License for the specific language governing permissions and       #
#  limitations under the License.                                            #
#                                                                            #
#============================================================================#



''' Performance model learner tests. '''


import numpy as np
import pytest

from . import __


MODULE_QNAME = f"{__.PACKAGE_NAME}.learner"


def _observe(
    node_id, b, coefficients = __.NODE_FAST, batch = 0, epoch = 0,
    gamma = 0.5, t_o = 0.2, t_u = 0.05,
):
    ''' Noiseless observation of node following coefficients. '''
    module = __.cache_import_module( MODULE_QNAME )
    q, s, k, m = coefficients
    a_time = q * b + s
    p_time = k * b + m
    return module.TimingObservation(
        epoch = epoch, batch = batch, node_id = node_id, b = b,
        a_time = a_time, p_time = p_time,
        sync_start_obs = a_time + gamma * p_time,
        batch_time_obs = a_time + p_time + t_u,
        gamma_obs = gamma, t_o_obs = t_o, t_u_obs = t_u )


# =============================================================================
# Observation and Model Tests (000-099)
# =============================================================================

def test_000_observation_rejects_negative_times( ):
    ''' Timing telemetry cannot be negative. '''
    module = __.cache_import_module( MODULE_QNAME )
    exceptions = __.cache_import_module( f"{__.PACKAGE_NAME}.exceptions" )
    with pytest.raises( exceptions.DomainInvalidity, match = 'p_time' ):
        module.TimingObservation(
            epoch = 0, batch = 0, node_id = 0, b = 10,
            a_time = 0.1, p_time = -0.1, sync_start_obs = 0.1,
            batch_time_obs = 0.2, gamma_obs = 0.5,
            t_o_obs = 0.1, t_u_obs = 0.1 )


def test_010_empty_model_not_ready( ):
    ''' Fresh model has no observations and cannot produce a cluster. '''
    module = __.cache_import_module( MODULE_QNAME )
    exceptions = __.cache_import_module( f"{__.PACKAGE_NAME}.exceptions" )
    learned = module.produce_empty_model( 3 )
    assert learned.observation_counts == ( 0, 0, 0 )
    assert not learned.ready
    with pytest.raises( exceptions.ObservationsInsufficiency ):
        learned.produce_spec( )


# =============================================================================
# Fitting Tests (100-199)
# =============================================================================

def test_100_fit_interpolates_two_batches( ):
    ''' Two distinct noiseless batches recover coefficients exactly. '''
    module = __.cache_import_module( MODULE_QNAME )
    model = module.fit_compute_model(
        ( _observe( 0, 50 ), _observe( 0, 100 ) ) )
    q, s, k, m = __.NODE_FAST
    assert model.q == pytest.approx( q, abs = 1e-12 )
    assert model.s == pytest.approx( s, abs = 1e-12 )
    assert model.k == pytest.approx( k, abs = 1e-12 )
    assert model.m == pytest.approx( m, abs = 1e-12 )


def test_110_fit_requires_distinct_batches( ):
    ''' Observations at one batch size cannot determine a line. '''
    module = __.cache_import_module( MODULE_QNAME )
    exceptions = __.cache_import_module( f"{__.PACKAGE_NAME}.exceptions" )
    with pytest.raises( exceptions.ObservationsInsufficiency ):
        module.fit_compute_model( ( _observe( 0, 50 ), _observe( 0, 50 ) ) )
    with pytest.raises( exceptions.ObservationsInsufficiency ):
        module.fit_compute_model( ( ) )


def test_120_fit_noisy_observations( ):
    ''' Slopes survive five percent timing noise. '''
    module = __.cache_import_module( MODULE_QNAME )
    models = __.cache_import_module( f"{__.PACKAGE_NAME}.models" )
    simulator = __.cache_import_module( f"{__.PACKAGE_NAME}.simulator" )
    spec = __.produce_cluster( ( __.NODE_FAST, ) )
    engine = simulator.Simulator( simulator.TruthWorld(
        true_spec = spec, noise_cv = 0.05, seed = 3 ) )
    observations = [ ]
    for batch in range( 200 ):
        b = 32 * ( 1 + batch % 8 )
        allocation = models.Allocation( total = b, local_batches = ( b, ) )
        trace = engine.simulate_batch( allocation, 0, batch )
        observations.extend( trace.observations )
    model = module.fit_compute_model( observations )
    truth = spec.nodes[ 0 ]
    assert model.q == pytest.approx( truth.q, rel = 0.05 )
    assert model.k == pytest.approx( truth.k, rel = 0.05 )
    assert models.compute_time( model, 144 ) == pytest.approx(
        models.compute_time( truth, 144 ), rel = 0.02 )


def test_130_negative_intercept_is_clamped( ):
    ''' Fits implying negative fixed time are pinned at zero. '''
    module = __.cache_import_module( MODULE_QNAME )
    coefficients = ( 0.001, -0.01, 0.002, 0.1 )
    observations = [
        _observe( 0, b, coefficients, batch = i )
        for i, b in enumerate( ( 50, 100 ) ) ]
    learned = module.update( module.produce_empty_model( 1 ), observations )
    model = learned.nodes[ 0 ]
    assert model.s == 0.0
    assert model.q > 0
    assert learned.clamped_nodes == frozenset( { 0 } )


# =============================================================================
# Synchronization Estimate Tests (200-299)
# =============================================================================

@pytest.mark.parametrize(
    'means, variances, expected',
    (
        ( ( 0.2, 0.4 ), ( 0.01, 0.01 ), 0.3 ),
        ( ( 0.2, 0.4 ), ( 0.01, 0.03 ), 0.25 ),
        ( ( 0.35, ), ( 0.02, ), 0.35 ),
        ( ( 0.2, 0.4, 0.6 ), ( 0.0, 0.01, 0.01 ), 0.2 ),
        ( ( 0.2, 0.4, 0.6 ), ( 0.0, 0.0, 0.01 ), 0.3 ),
    )
)
def test_200_pool_inverse_variance( means, variances, expected ):
    ''' Inverse-variance pooling; exact nodes dominate. '''
    module = __.cache_import_module( MODULE_QNAME )
    assert module.pool_inverse_variance( means, variances ) == (
        pytest.approx( expected ) )


def test_201_pool_requires_aligned_inputs( ):
    ''' Means and variances must align. '''
    module = __.cache_import_module( MODULE_QNAME )
    exceptions = __.cache_import_module( f"{__.PACKAGE_NAME}.exceptions" )
    with pytest.raises( exceptions.EstimatorInvalidity ):
        module.pool_inverse_variance( ( 0.2, 0.4 ), ( 0.01, ) )


def test_210_estimate_gamma_clamps_measurements( ):
    ''' Measurements outside the open unit range are clamped. '''
    module = __.cache_import_module( MODULE_QNAME )
    assert module.estimate_gamma( ( ( 1.5, 1.2 ), ) ) == pytest.approx(
        module.GAMMA_MAXIMUM )
    assert module.estimate_gamma(
        ( ( 0.2, 0.2 ), ( 0.4, 0.4 ) ) ) == pytest.approx( 0.3 )


def test_211_estimate_gamma_needs_samples( ):
    ''' Every node needs two measurements when pooling across nodes. '''
    module = __.cache_import_module( MODULE_QNAME )
    exceptions = __.cache_import_module( f"{__.PACKAGE_NAME}.exceptions" )
    with pytest.raises( exceptions.ObservationsInsufficiency ):
        module.estimate_gamma( ( ( 0.2, 0.3 ), ( 0.4, ) ) )
    with pytest.raises( exceptions.EstimatorInvalidity ):
        module.estimate_gamma( ( ) )


def test_220_comm_time_is_minimum( ):
    ''' Only the undelayed node reports true synchronization time. '''
    module = __.cache_import_module( MODULE_QNAME )
    assert module.estimate_comm_time( ( 0.35, 0.42, 0.40 ) ) == (
        pytest.approx( 0.35 ) )
    assert module.estimate_comm_time( ( 0.3, 0.3 ) ) == pytest.approx( 0.3 )


def test_221_comm_time_is_smallest_node_mean( ):
    ''' Each node's observations are averaged before taking minimum. '''
    module = __.cache_import_module( MODULE_QNAME )
    crossing = ( ( 0.3, 0.5 ), ( 0.5, 0.3 ) )
    assert module.estimate_comm_time( crossing ) == pytest.approx( 0.4 )
    observations = ( ( 0.3, 0.5 ), ( 0.4, 0.2 ) )
    assert module.estimate_comm_time( observations ) == pytest.approx( 0.3 )
    exceptions = __.cache_import_module( f"{__.PACKAGE_NAME}.exceptions" )
    with pytest.raises( exceptions.EstimatorInvalidity ):
        module.estimate_comm_time( ( ) )


def test_222_comm_time_from_waiting_nodes( three_node_cluster ):
    ''' Noiseless telemetry yields true synchronization times. '''
    module = __.cache_import_module( MODULE_QNAME )
    models = __.cache_import_module( f"{__.PACKAGE_NAME}.models" )
    simulator = __.cache_import_module( f"{__.PACKAGE_NAME}.simulator" )
    engine = simulator.Simulator( simulator.TruthWorld(
        true_spec = three_node_cluster, noise_cv = 0.0 ) )
    allocation = models.Allocation(
        total = 300, local_batches = ( 100, 100, 100 ) )
    trace = engine.simulate_batch( allocation )
    delayed = [ o.t_o_obs for o in trace.observations ]
    assert max( delayed ) > three_node_cluster.comm.t_o
    learned = module.update(
        module.produce_empty_model( 3 ), trace.observations )
    assert learned.t_o == pytest.approx( three_node_cluster.comm.t_o )
    assert learned.t_u == pytest.approx( three_node_cluster.comm.t_u )


def test_223_comm_time_across_allocations( three_node_cluster ):
    ''' Epochs with different waiting nodes still yield true times. '''
    module = __.cache_import_module( MODULE_QNAME )
    models = __.cache_import_module( f"{__.PACKAGE_NAME}.models" )
    simulator = __.cache_import_module( f"{__.PACKAGE_NAME}.simulator" )
    engine = simulator.Simulator( simulator.TruthWorld(
        true_spec = three_node_cluster, noise_cv = 0.0 ) )
    observations = [ ]
    for epoch, batches in enumerate( ( ( 100, 100, 100 ), ( 200, 90, 10 ) ) ):
        allocation = models.Allocation(
            total = 300, local_batches = batches )
        for batch in range( 2 ):
            trace = engine.simulate_batch( allocation, epoch, batch )
            observations.extend( trace.observations )
    learned = module.update( module.produce_empty_model( 3 ), observations )
    assert learned.t_o == pytest.approx( three_node_cluster.comm.t_o )
    assert learned.t_u == pytest.approx( three_node_cluster.comm.t_u )


# =============================================================================
# Online Update Tests (300-399)
# =============================================================================

def test_300_empty_update_is_identity( ):
    ''' Updating without observations changes nothing. '''
    module = __.cache_import_module( MODULE_QNAME )
    learned = module.produce_empty_model( 2 )
    assert module.update( learned, ( ) ) is learned


def test_310_update_reaches_readiness( ):
    ''' Two distinct batches on every node make model ready. '''
    module = __.cache_import_module( MODULE_QNAME )
    learned = module.produce_empty_model( 2 )
    learned = module.update( learned, (
        _observe( 0, 60, __.NODE_FAST, batch = 0 ),
        _observe( 1, 40, __.NODE_SLOW, batch = 0 ) ) )
    assert not learned.ready
    learned = module.update( learned, (
        _observe( 0, 70, __.NODE_FAST, batch = 1 ),
        _observe( 1, 30, __.NODE_SLOW, batch = 1 ) ) )
    assert learned.ready
    spec = learned.produce_spec( )
    assert spec.comm.gamma == pytest.approx( 0.5 )
    assert spec.comm.t_o == pytest.approx( 0.2 )
    assert spec.comm.t_u == pytest.approx( 0.05 )
    assert spec.nodes[ 1 ].k == pytest.approx( __.NODE_SLOW[ 2 ] )


def test_311_produce_spec_passes_caps( ):
    ''' Learned cluster carries supplied caps. '''
    module = __.cache_import_module( MODULE_QNAME )
    learned = module.update( module.produce_empty_model( 1 ), (
        _observe( 0, 10, batch = 0 ), _observe( 0, 20, batch = 1 ) ) )
    assert learned.produce_spec( caps = ( 64.0, ) ).caps == ( 64.0, )


def test_320_third_batch_size_refits_least_squares( ):
    ''' Three distinct batches give ordinary least squares fit. '''
    module = __.cache_import_module( MODULE_QNAME )
    batches = ( 10, 20, 40 )
    a_times = ( 0.06, 0.075, 0.09 )
    observations = [
        module.TimingObservation(
            epoch = 0, batch = i, node_id = 0, b = b,
            a_time = a, p_time = 0.002 * b + 0.1,
            sync_start_obs = a, batch_time_obs = a + 0.2,
            gamma_obs = 0.5, t_o_obs = 0.2, t_u_obs = 0.05 )
        for i, ( b, a ) in enumerate( zip( batches, a_times ) ) ]
    learned = module.produce_empty_model( 1 )
    learned = module.update( learned, observations[ : 2 ] )
    learned = module.update( learned, observations[ 2 : ] )
    slope, intercept = np.polyfit( batches, a_times, 1 )
    assert learned.nodes[ 0 ].q == pytest.approx( slope )
    assert learned.nodes[ 0 ].s == pytest.approx( intercept )
    assert learned.observation_counts == ( 3, )


def test_330_update_isolates_nodes( ):
    ''' Observations of one node leave other models untouched. '''
    module = __.cache_import_module( MODULE_QNAME )
    learned = module.update( module.produce_empty_model( 2 ), (
        _observe( 0, 60, __.NODE_FAST, batch = 0 ),
        _observe( 1, 40, __.NODE_SLOW, batch = 0 ),
        _observe( 0, 70, __.NODE_FAST, batch = 1 ),
        _observe( 1, 30, __.NODE_SLOW, batch = 1 ) ) )
    updated = module.update(
        learned, ( _observe( 0, 90, ( 0.002, 0.05, 0.002, 0.1 ), 2 ), ) )
    assert updated.nodes[ 1 ] == learned.nodes[ 1 ]
    assert updated.nodes[ 0 ] != learned.nodes[ 0 ]


def test_340_update_rejects_unknown_node( ):
    ''' Observations must come from cluster nodes. '''
    module = __.cache_import_module( MODULE_QNAME )
    exceptions = __.cache_import_module( f"{__.PACKAGE_NAME}.exceptions" )
    with pytest.raises( exceptions.AllocationMismatch ):
        module.update(
            module.produce_empty_model( 2 ), ( _observe( 2, 10 ), ) )
