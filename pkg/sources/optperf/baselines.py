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



''' Reference allocation strategies to compare against the optimum. '''


from . import __
from . import exceptions as _exceptions
from . import models as _models
from . import optimizer as _optimizer


_scribe = __.logging.getLogger( __name__ )


class TuningTrajectory( __.immut.DataclassObject ):
    ''' Allocations visited by the iterative tuner and their batch times. '''

    allocations: __.typx.Annotated[
        tuple[ _models.Allocation, ... ],
        __.ddoc.Doc( 'Accepted allocations, starting from even split.' ) ]
    batch_times: __.typx.Annotated[
        tuple[ float, ... ],
        __.ddoc.Doc( 'Cluster batch time of each accepted allocation.' ) ]

    @property
    def final( self ) -> _models.Allocation:
        ''' Last accepted allocation. '''
        return self.allocations[ -1 ]

    @property
    def batch_time( self ) -> float:
        ''' Batch time of last accepted allocation. '''
        return self.batch_times[ -1 ]


class StrategyComparison( __.immut.DataclassObject ):
    ''' Batch times of each strategy for one total batch size. '''

    total: __.typx.Annotated[ int, __.ddoc.Doc( 'Total batch size.' ) ]
    even_time: __.typx.Annotated[
        float, __.ddoc.Doc( 'Batch time of even split.' ) ]
    tuned_time: __.typx.Annotated[
        float, __.ddoc.Doc( 'Batch time after iterative tuning.' ) ]
    proportional_time: __.typx.Annotated[
        float, __.ddoc.Doc( 'Batch time of equal computing time split.' ) ]
    optperf_time: __.typx.Annotated[
        float, __.ddoc.Doc( 'Batch time of rounded optimal allocation.' ) ]

    @property
    def speedups( self ) -> dict[ str, float ]:
        ''' Ratio of each strategy's batch time to the optimal one. '''
        return {
            'even': self.even_time / self.optperf_time,
            'tuned': self.tuned_time / self.optperf_time,
            'proportional': self.proportional_time / self.optperf_time,
        }

    def render_as_json( self ) -> dict[ str, __.typx.Any ]:
        ''' Renders comparison as JSON-compatible dictionary. '''
        return {
            'total': self.total,
            'even': self.even_time,
            'tuned': self.tuned_time,
            'proportional': self.proportional_time,
            'optperf': self.optperf_time,
            'speedups': self.speedups,
        }


def even_allocation( total: int, count: int ) -> _models.Allocation:
    ''' Integral equal split; leftover samples go to lower indices. '''
    if count < 1:
        raise _exceptions.DomainInvalidity(
            'count', f'must be positive, got {count}' )
    return _optimizer.round_allocation( _models.even_split( total, count ) )


def proportional_allocation(
    spec: _models.ClusterSpec, total: int
) -> _models.Allocation:
    ''' Integral split equalizing computing time, overlap ignored. '''
    solution = _optimizer.solve_equal_compute( spec, total )
    return _optimizer.round_allocation( solution.allocation )


def tune_iteratively(
    spec: _models.ClusterSpec,
    total: int,
    step: int = 5,
    iterations: int = 100,
) -> TuningTrajectory:
    ''' Moves samples from the slowest node to the fastest one.

        Starts from an even split and stops as soon as a move fails to
        reduce the cluster batch time.
    '''
    if step < 1 or iterations < 0:
        raise _exceptions.DomainInvalidity(
            'step', f'need step >= 1 and iterations >= 0, '
            f'got {step} and {iterations}' )
    current = even_allocation( total, spec.size )
    current_time = _models.cluster_batch_time( spec, current )
    allocations = [ current ]
    times = [ current_time ]
    for _ in range( iterations ):
        candidate = _move_samples( spec, current, step )
        if __.is_absent( candidate ): break
        candidate_time = _models.cluster_batch_time( spec, candidate )
        if candidate_time >= current_time: break
        current, current_time = candidate, candidate_time
        allocations.append( current )
        times.append( current_time )
    _scribe.debug(
        'Tuner accepted %d moves at total %d.', len( times ) - 1, total )
    return TuningTrajectory(
        allocations = tuple( allocations ), batch_times = tuple( times ) )


def compare_strategies(
    spec: _models.ClusterSpec, candidates: __.cabc.Sequence[ int ]
) -> tuple[ StrategyComparison, ... ]:
    ''' Evaluates every strategy at each feasible total batch size. '''
    results: list[ StrategyComparison ] = [ ]
    for total in candidates:
        try: solution = _optimizer.find_optperf( spec, total )
        except _exceptions.AllocationInfeasibility as exception:
            _scribe.warning( 'Skipping total %d: %s', total, exception )
            continue
        results.append( StrategyComparison(
            total = total,
            even_time = _models.cluster_batch_time(
                spec, even_allocation( total, spec.size ) ),
            tuned_time = tune_iteratively( spec, total ).batch_time,
            proportional_time = _models.cluster_batch_time(
                spec, proportional_allocation( spec, total ) ),
            optperf_time = _models.cluster_batch_time(
                spec, solution.alloc_int ) ) )
    return tuple( results )


def _move_samples(
    spec: _models.ClusterSpec, allocation: _models.Allocation, step: int
) -> __.Absential[ _models.Allocation ]:
    batches = list( allocation.local_batches )
    times = [
        _models.node_batch_time( node, spec.comm, b )
        for node, b in zip( spec.nodes, batches ) ]
    slowest = max( range( len( times ) ), key = times.__getitem__ )
    fastest = min( range( len( times ) ), key = times.__getitem__ )
    caps = spec.produce_caps( )
    moved = int( min(
        step, batches[ slowest ], caps[ fastest ] - batches[ fastest ] ) )
    if slowest == fastest or moved <= 0: return __.absent
    batches[ slowest ] -= moved
    batches[ fastest ] += moved
    return _models.Allocation(
        total = allocation.total, local_batches = tuple( batches ) )
