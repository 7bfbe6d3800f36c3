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



''' Reference allocation strategy tests. '''


import pytest

from . import __


MODULE_QNAME = f"{__.PACKAGE_NAME}.baselines"


@pytest.mark.parametrize( 'total, count, expected', [
    ( 9, 3, ( 3, 3, 3 ) ),
    ( 10, 3, ( 4, 3, 3 ) ),
    ( 11, 3, ( 4, 4, 3 ) ),
    ( 2, 4, ( 1, 1, 0, 0 ) ),
] )
def test_000_even_allocation( total, count, expected ):
    ''' Leftover samples go to lower node indices. '''
    module = __.cache_import_module( MODULE_QNAME )
    allocation = module.even_allocation( total, count )
    assert allocation.local_batches == expected
    assert allocation.total == total


def test_001_even_allocation_needs_nodes( ):
    ''' Splitting across no nodes is rejected. '''
    module = __.cache_import_module( MODULE_QNAME )
    exceptions = __.cache_import_module( f"{__.PACKAGE_NAME}.exceptions" )
    with pytest.raises( exceptions.DomainInvalidity ):
        module.even_allocation( 10, 0 )


def test_010_proportional_allocation( two_node_cluster ):
    ''' Equal computing time split favors the fast node. '''
    module = __.cache_import_module( MODULE_QNAME )
    allocation = module.proportional_allocation( two_node_cluster, 100 )
    assert allocation.local_batches == ( 61, 39 )


def test_100_tuner_improves_monotonically( two_node_cluster ):
    ''' Every accepted move lowers batch time. '''
    module = __.cache_import_module( MODULE_QNAME )
    models = __.cache_import_module( f"{__.PACKAGE_NAME}.models" )
    optimizer = __.cache_import_module( f"{__.PACKAGE_NAME}.optimizer" )
    trajectory = module.tune_iteratively( two_node_cluster, 100 )
    assert trajectory.allocations[ 0 ].local_batches == ( 50, 50 )
    assert len( trajectory.allocations ) > 1
    times = trajectory.batch_times
    assert all(
        later < earlier for earlier, later in zip( times, times[ 1: ] ) )
    assert trajectory.batch_time == pytest.approx(
        models.cluster_batch_time( two_node_cluster, trajectory.final ) )
    optimum = optimizer.find_optperf( two_node_cluster, 100 )
    assert trajectory.batch_time >= optimum.batch_time - 1e-12
    for allocation in trajectory.allocations:
        assert sum( allocation.local_batches ) == 100


def test_101_tuner_without_iterations( two_node_cluster ):
    ''' No iterations leaves the even split. '''
    module = __.cache_import_module( MODULE_QNAME )
    trajectory = module.tune_iteratively(
        two_node_cluster, 100, iterations = 0 )
    assert len( trajectory.allocations ) == 1
    assert trajectory.final.local_batches == ( 50, 50 )


def test_102_tuner_respects_caps( ):
    ''' A capped fastest node receives no further samples. '''
    module = __.cache_import_module( MODULE_QNAME )
    spec = __.produce_cluster(
        ( __.NODE_FAST, __.NODE_SLOW ), caps = ( 50, float( 'inf' ) ) )
    trajectory = module.tune_iteratively( spec, 100 )
    assert trajectory.final.local_batches == ( 50, 50 )


def test_103_tuner_validates_step( two_node_cluster ):
    ''' Moves need at least one sample. '''
    module = __.cache_import_module( MODULE_QNAME )
    exceptions = __.cache_import_module( f"{__.PACKAGE_NAME}.exceptions" )
    with pytest.raises( exceptions.DomainInvalidity ):
        module.tune_iteratively( two_node_cluster, 100, step = 0 )


def test_200_comparison( two_node_cluster ):
    ''' Optimal allocation is never slower at an exact optimum. '''
    module = __.cache_import_module( MODULE_QNAME )
    comparisons = module.compare_strategies(
        two_node_cluster, ( 1, 100, 200 ) )
    assert [ comparison.total for comparison in comparisons ] == [ 100, 200 ]
    exact = comparisons[ 0 ]
    assert exact.optperf_time == pytest.approx( 0.47 )
    assert exact.even_time == pytest.approx( 0.51 )
    for speedup in exact.speedups.values( ):
        assert speedup >= 1.0 - 1e-9
    assert comparisons[ 1 ].speedups[ 'even' ] > 1.0
    rendition = exact.render_as_json( )
    assert set( rendition ) == {
        'total', 'even', 'tuned', 'proportional', 'optperf', 'speedups' }
