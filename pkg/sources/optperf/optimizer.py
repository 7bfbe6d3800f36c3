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



''' Optimal local batch allocation for a given total batch size.

    Every node's batch time is a piecewise-linear increasing function of
    its local batch size, so the minimum cluster batch time is reached
    when all unconstrained nodes finish at one common level. Which linear
    piece (computing or synchronization) holds for each node is its
    overlap state; the solver determines it with two checks and, for
    mixed clusters, a boundary search over nodes ranked by fixed time.
'''


from . import __
from . import exceptions as _exceptions
from . import models as _models


_scribe = __.logging.getLogger( __name__ )

_ORACLE_POINTS_MAXIMUM = 10_000_000


class ScenarioKinds( __.enum.Enum ):
    ''' Overlap state of an optimal allocation. '''

    AllCompute = 'all-compute'
    AllComm = 'all-comm'
    Mixed = 'mixed'


class Scenario( __.immut.DataclassObject ):
    ''' Overlap state found for one total batch size. '''

    kind: __.typx.Annotated[
        ScenarioKinds, __.ddoc.Doc( 'Which bottleneck case holds.' ) ]
    labels: __.typx.Annotated[
        tuple[ _models.BottleneckLabels, ... ],
        __.ddoc.Doc( 'Bottleneck per node at the optimal allocation.' ) ]
    boundary: __.typx.Annotated[
        __.Absential[ int ],
        __.ddoc.Doc(
            'Number of ranked outlier nodes hypothesized as computing '
            'bottlenecks. Absent unless mixed and found by search.' ) ] = (
                __.absent )

    def render_as_text( self ) -> str:
        ''' Renders scenario as short label. '''
        if __.is_absent( self.boundary ): return self.kind.value
        return f'{self.kind.value}({self.boundary})'


class LevelSolution( __.immut.DataclassObject ):
    ''' Allocation where every unconstrained node reaches one time level. '''

    level: __.typx.Annotated[
        float, __.ddoc.Doc( 'Common time level in seconds.' ) ]
    allocation: __.typx.Annotated[
        _models.Allocation,
        __.ddoc.Doc( 'Real-valued allocation reaching the level.' ) ]
    clamped_nodes: __.typx.Annotated[
        frozenset[ int ],
        __.ddoc.Doc(
            'Nodes pinned at zero or at their cap instead of the level.' )
    ] = frozenset( )


class OptPerfSolution( __.immut.DataclassObject ):
    ''' Minimum batch time and the allocation achieving it. '''

    batch_time: __.typx.Annotated[
        float,
        __.ddoc.Doc( 'Optimal cluster batch time in seconds.' ) ]
    alloc_real: __.typx.Annotated[
        _models.Allocation, __.ddoc.Doc( 'Real-valued optimum.' ) ]
    alloc_int: __.typx.Annotated[
        _models.Allocation, __.ddoc.Doc( 'Rounded integral allocation.' ) ]
    scenario: __.typx.Annotated[
        Scenario, __.ddoc.Doc( 'Overlap state of the optimum.' ) ]
    clamped_nodes: __.typx.Annotated[
        frozenset[ int ],
        __.ddoc.Doc( 'Nodes pinned at zero or at their cap.' )
    ] = frozenset( )

    @property
    def labels( self ) -> tuple[ _models.BottleneckLabels, ... ]:
        ''' Bottleneck per node at the optimum. '''
        return self.scenario.labels

    def render_as_json( self ) -> dict[ str, __.typx.Any ]:
        ''' Renders solution as JSON-compatible dictionary. '''
        return _models.round_reals( {
            'total': self.alloc_int.total,
            'batch_time': self.batch_time,
            'alloc_real': list( self.alloc_real.local_batches ),
            'alloc_int': list( self.alloc_int.local_batches ),
            'labels': [ label.value for label in self.labels ],
            'scenario': self.scenario.kind.value,
            'boundary': (
                None if __.is_absent( self.scenario.boundary )
                else self.scenario.boundary ),
            'clamped_nodes': sorted( self.clamped_nodes ),
        } )


# Each node contributes one or more linear pieces ( alpha, beta ): at
# level L the piece admits b = ( L - alpha ) / beta samples. With several
# pieces, the node admits the minimum over them.
_Pieces: __.typx.TypeAlias = tuple[ __.FloatArray, __.FloatArray ]


def solve_equal_compute(
    spec: _models.ClusterSpec, total: int
) -> LevelSolution:
    ''' Equalizes computing time across nodes. Level is that time. '''
    slopes = _produce_compute_slopes( spec )
    intercepts = __.np.array(
        [ node.compute_intercept for node in spec.nodes ] )
    return _solve_level( spec, total, ( ( intercepts, slopes ), ) )


def solve_equal_syncstart(
    spec: _models.ClusterSpec, total: int
) -> LevelSolution:
    ''' Equalizes synchronization start across nodes.

        Level is the common synchronization start.
    '''
    slopes = _produce_sync_slopes( spec )
    intercepts = __.np.array( [
        node.produce_sync_intercept( spec.comm.gamma )
        for node in spec.nodes ] )
    return _solve_level( spec, total, ( ( intercepts, slopes ), ) )


def solve_mixed(
    spec: _models.ClusterSpec,
    total: int,
    compute_set: __.cabc.Collection[ int ],
    comm_set: __.cabc.Collection[ int ],
) -> LevelSolution:
    ''' Solves overlap hypothesis: computing nodes share computing time,
        communication nodes share synchronization start, and the former
        equals the latter plus overlappable synchronization time.

        Level is the combined time; batch time adds last-bucket time.
    '''
    compute_nodes = frozenset( compute_set )
    comm_nodes = frozenset( comm_set )
    everyone = frozenset( range( spec.size ) )
    if compute_nodes & comm_nodes or compute_nodes | comm_nodes != everyone:
        raise _exceptions.DomainInvalidity(
            'compute_set',
            'computing and communication sets must partition the nodes' )
    mask = __.np.array( [ i in compute_nodes for i in range( spec.size ) ] )
    return _solve_level( spec, total, ( _produce_hypothesis_pieces(
        spec, mask ), ) )


def solve_exact( spec: _models.ClusterSpec, total: int ) -> LevelSolution:
    ''' Minimizes cluster batch time directly over both linear pieces.

        Level excludes last-bucket time. Does not rely on any overlap
        hypothesis.
    '''
    comm = spec.comm
    compute = (
        __.np.array( [ node.compute_intercept for node in spec.nodes ] ),
        _produce_compute_slopes( spec ) )
    sync = (
        __.np.array( [
            node.produce_sync_intercept( comm.gamma ) + comm.t_o
            for node in spec.nodes ] ),
        _produce_sync_slopes( spec ) )
    return _solve_level( spec, total, ( compute, sync ) )


def find_optperf(
    spec: _models.ClusterSpec,
    total: int,
    warm_start: __.Absential[ Scenario ] = __.absent,
) -> OptPerfSolution:
    ''' Finds minimum batch time allocation and its overlap state.

        Tries the all-computing and all-communication hypotheses first.
        Otherwise, nodes agreeing across both are fixed and the remaining
        outliers, ranked by fixed time, are split by a boundary found with
        binary search. Failing that, every node is ranked by the combined
        time at which it turns computing bottleneck and searched again. A
        warm start seeds the first boundary tried.
    '''
    _check_feasibility( spec, total )
    comm = spec.comm
    check_compute = solve_equal_compute( spec, total )
    labels_compute = _classify_all( spec, check_compute.allocation )
    if all(
        label is _models.BottleneckLabels.Compute
        for label in labels_compute
    ):
        _scribe.debug( 'Batch %d: all nodes computing bottlenecks.', total )
        return _produce_solution(
            spec, check_compute, ScenarioKinds.AllCompute )
    check_sync = solve_equal_syncstart( spec, total )
    labels_sync = _classify_all( spec, check_sync.allocation )
    if all(
        label is _models.BottleneckLabels.Communication
        for label in labels_sync
    ):
        _scribe.debug(
            'Batch %d: all nodes communication bottlenecks.', total )
        return _produce_solution( spec, check_sync, ScenarioKinds.AllComm )
    for fixed, outliers in _produce_rankings(
        spec, labels_compute, labels_sync
    ):
        boundary = _search_boundary(
            spec, total, fixed, outliers,
            _produce_warm_boundary( outliers, warm_start ) )
        if __.is_absent( boundary ):
            _scribe.debug(
                'Batch %d: no boundary verified among %d ranked outliers.',
                total, len( outliers ) )
            continue
        solution = _solve_boundary( spec, total, fixed, outliers, boundary )
        _scribe.debug(
            'Batch %d: mixed bottlenecks, boundary %d of %d outliers '
            '(combined time %.6g s).',
            total, boundary, len( outliers ), solution.level + comm.t_u )
        return _produce_solution(
            spec, solution, ScenarioKinds.Mixed, boundary = boundary )
    _scribe.warning(
        'Batch %d: no overlap state verified by boundary search; '
        'solving over both pieces directly.', total )
    exact = solve_exact( spec, total )
    kind = _determine_kind( _classify_all( spec, exact.allocation ) )
    return _produce_solution( spec, exact, kind )


def enumerate_boundaries(
    spec: _models.ClusterSpec, total: int
) -> tuple[ int, ... ]:
    ''' Tries every boundary position; returns those that verify.

        Empty when either uniform hypothesis already holds.
    '''
    _check_feasibility( spec, total )
    labels_compute = _classify_all(
        spec, solve_equal_compute( spec, total ).allocation )
    if all(
        label is _models.BottleneckLabels.Compute
        for label in labels_compute
    ): return ( )
    labels_sync = _classify_all(
        spec, solve_equal_syncstart( spec, total ).allocation )
    if all(
        label is _models.BottleneckLabels.Communication
        for label in labels_sync
    ): return ( )
    for fixed, outliers in _produce_rankings(
        spec, labels_compute, labels_sync
    ):
        verified = tuple(
            boundary for boundary in range( len( outliers ) + 1 )
            if _verify_boundary(
                spec, total, fixed, outliers, boundary ) == ( False, False ) )
        if verified: return verified
    return ( )


def round_allocation( allocation: _models.Allocation ) -> _models.Allocation:
    ''' Rounds allocation to integers by largest remainder.

        Remainder ties favor the lower node index.
    '''
    values = __.np.maximum(
        __.np.asarray( allocation.local_batches, dtype = __.np.float64 ),
        0.0 )
    floors = __.np.floor( values )
    remainders = values - floors
    deficit = allocation.total - int( floors.sum( ) )
    # Stable sort on negated remainders keeps lower indices first.
    order = __.np.argsort( -remainders, kind = 'stable' )
    rounded = [ int( value ) for value in floors ]
    for index in order[ : max( deficit, 0 ) ]:
        rounded[ int( index ) ] += 1
    return _models.Allocation(
        total = allocation.total, local_batches = tuple( rounded ) )


def warmup_allocation(
    sample_times: __.cabc.Sequence[ float ], total: int
) -> _models.Allocation:
    ''' Splits batch in inverse proportion to per-sample computing time. '''
    if total < 1:
        raise _exceptions.DomainInvalidity(
            'total', f'must be positive, got {total}' )
    times = __.np.asarray( sample_times, dtype = __.np.float64 )
    if times.size == 0 or not __.np.all( times > 0 ):
        raise _exceptions.DomainInvalidity(
            'sample_times', f'must all be positive, got {tuple( times )}' )
    weights = times.sum( ) / times
    ratios = weights / weights.sum( )
    return round_allocation( _models.Allocation(
        total = total,
        local_batches = tuple( float( b ) for b in ratios * total ) ) )


def brute_force_optperf(
    spec: _models.ClusterSpec, total: int, grid_step: float
) -> OptPerfSolution:
    ''' Exhaustive grid search for minimum batch time.

        Local batch sizes range over multiples of a grid step dividing the
        total. Per-node times are monotone, so the smallest feasible
        level among all grid evaluations is the grid optimum.
    '''
    if not grid_step > 0:
        raise _exceptions.DomainInvalidity(
            'grid_step', f'must be positive, got {grid_step!r}' )
    _check_feasibility( spec, total )
    steps = max( round( total / grid_step ), 1 )
    points = spec.size * ( steps + 1 )
    if points > _ORACLE_POINTS_MAXIMUM:
        raise _exceptions.OracleSizeExcess( points, _ORACLE_POINTS_MAXIMUM )
    comm = spec.comm
    grid = __.np.arange( steps + 1 ) * ( total / steps )
    caps = spec.produce_caps( )
    limits = __.np.minimum(
        __.np.floor( caps / ( total / steps ) + 1e-9 ), steps
    ).astype( __.np.int64 )
    times = __.np.empty( ( spec.size, steps + 1 ) )
    for i, node in enumerate( spec.nodes ):
        compute = node.compute_slope * grid + node.compute_intercept
        sync = (
            node.produce_sync_slope( comm.gamma ) * grid
            + node.produce_sync_intercept( comm.gamma ) )
        times[ i ] = __.np.maximum(
            compute + comm.t_u, sync + comm.t_comm )
        times[ i, limits[ i ] + 1 : ] = __.np.inf
    levels = __.np.unique( times[ __.np.isfinite( times ) ] )

    def admitted( level: float ) -> __.npt.NDArray[ __.np.int64 ]:
        # Monotone rows: count of grid points at or below level, minus one.
        return __.np.array( [
            __.np.searchsorted( row, level, side = 'right' ) - 1
            for row in times ] )

    low, high = 0, levels.size - 1
    while low < high:
        middle = ( low + high ) // 2
        units = admitted( float( levels[ middle ] ) )
        if __.np.all( units >= 0 ) and units.sum( ) >= steps: high = middle
        else: low = middle + 1
    units = admitted( float( levels[ low ] ) )
    excess = int( units.sum( ) ) - steps
    for i in reversed( range( spec.size ) ):
        cut = min( excess, int( units[ i ] ) )
        units[ i ] -= cut
        excess -= cut
    allocation = _models.Allocation(
        total = total,
        local_batches = tuple(
            int( unit ) * total / steps for unit in units ) )
    labels = _classify_all( spec, allocation )
    return OptPerfSolution(
        batch_time = _models.cluster_batch_time( spec, allocation ),
        alloc_real = allocation,
        alloc_int = round_allocation( allocation ),
        scenario = Scenario(
            kind = _determine_kind( labels ), labels = labels ) )


def _check_feasibility( spec: _models.ClusterSpec, total: int ) -> None:
    if total < spec.size:
        raise _exceptions.AllocationInfeasibility(
            total, f'fewer samples than the {spec.size} nodes' )
    capacity = float( spec.produce_caps( ).sum( ) )
    if capacity < total:
        raise _exceptions.AllocationInfeasibility(
            total, f'local batch caps admit at most {capacity:g} samples' )


def _classify_all(
    spec: _models.ClusterSpec, allocation: _models.Allocation
) -> tuple[ _models.BottleneckLabels, ... ]:
    return tuple(
        _models.classify_bottleneck( node, spec.comm, b )
        for node, b in zip( spec.nodes, allocation.local_batches ) )


def _determine_kind(
    labels: __.cabc.Sequence[ _models.BottleneckLabels ]
) -> ScenarioKinds:
    if all( label is _models.BottleneckLabels.Compute for label in labels ):
        return ScenarioKinds.AllCompute
    if all(
        label is _models.BottleneckLabels.Communication for label in labels
    ): return ScenarioKinds.AllComm
    return ScenarioKinds.Mixed


def _produce_compute_slopes( spec: _models.ClusterSpec ) -> __.FloatArray:
    slopes = __.np.array( [ node.compute_slope for node in spec.nodes ] )
    for node, slope in zip( spec.nodes, slopes ):
        if slope <= 0:
            raise _exceptions.ModelSingularity( node.node_id, 'computing' )
    return slopes


def _produce_sync_slopes( spec: _models.ClusterSpec ) -> __.FloatArray:
    gamma = spec.comm.gamma
    slopes = __.np.array(
        [ node.produce_sync_slope( gamma ) for node in spec.nodes ] )
    for node, slope in zip( spec.nodes, slopes ):
        if slope <= 0:
            raise _exceptions.ModelSingularity(
                node.node_id, 'synchronization start' )
    return slopes


def _produce_hypothesis_pieces(
    spec: _models.ClusterSpec,
    compute_mask: __.npt.NDArray[ __.np.bool_ ],
) -> _Pieces:
    comm = spec.comm
    compute_slopes = _produce_compute_slopes( spec )
    sync_slopes = _produce_sync_slopes( spec )
    compute_intercepts = __.np.array(
        [ node.compute_intercept for node in spec.nodes ] )
    sync_intercepts = __.np.array( [
        node.produce_sync_intercept( comm.gamma ) + comm.t_o
        for node in spec.nodes ] )
    return (
        __.np.where( compute_mask, compute_intercepts, sync_intercepts ),
        __.np.where( compute_mask, compute_slopes, sync_slopes ) )


def _admit(
    pieces: __.cabc.Sequence[ _Pieces ], caps: __.FloatArray, level: float
) -> __.FloatArray:
    admitted = __.np.full( caps.shape, __.np.inf )
    for intercepts, slopes in pieces:
        admitted = __.np.minimum( admitted, ( level - intercepts ) / slopes )
    return __.np.clip( admitted, 0.0, caps )


def _solve_level(
    spec: _models.ClusterSpec,
    total: int,
    pieces: __.cabc.Sequence[ _Pieces ],
) -> LevelSolution:
    ''' Finds level at which admitted samples sum to total.

        Admitted samples are piecewise linear and non-decreasing in the
        level, with kinks at piece intercepts, at cap levels, and where
        pieces of one node cross. Between the two kinks bracketing the
        total, the level follows in closed form from the pieces that are
        active and unclamped there.
    '''
    caps = spec.produce_caps( )
    if float( caps.sum( ) ) < total:
        raise _exceptions.AllocationInfeasibility(
            total, 'local batch caps admit fewer samples' )
    kinks: list[ __.FloatArray ] = [ ]
    for intercepts, slopes in pieces:
        kinks.append( intercepts )
        capped = intercepts + slopes * caps
        kinks.append( capped[ __.np.isfinite( capped ) ] )
    for ( ia, sa ), ( ib, sb ) in __.itertools.combinations( pieces, 2 ):
        with __.np.errstate( divide = 'ignore', invalid = 'ignore' ):
            # Level where both pieces admit the same batch.
            crossing = ( ib * sa - ia * sb ) / ( sa - sb )
        kinks.append( crossing[ __.np.isfinite( crossing ) ] )
    levels = __.np.unique( __.np.concatenate( kinks ) )
    sums = __.np.array( [
        _admit( pieces, caps, float( level ) ).sum( ) for level in levels ] )
    upper = int( __.np.searchsorted( sums, total, side = 'left' ) )
    if upper >= levels.size:
        floor, ceiling = float( levels[ -1 ] ), __.math.inf
        trial = floor + 1.0
    else:
        floor = float( levels[ max( upper - 1, 0 ) ] )
        ceiling = float( levels[ upper ] )
        trial = 0.5 * ( floor + ceiling )
    level = _solve_level_segment( pieces, caps, total, trial )
    level = min( max( level, floor ), ceiling )
    admitted = _admit( pieces, caps, level )
    clamped = frozenset(
        i for i, ( b, cap ) in enumerate( zip( admitted, caps ) )
        if b <= 0.0 or b >= cap )
    local_batches = _balance( admitted, caps, total, clamped )
    return LevelSolution(
        level = level,
        allocation = _models.Allocation(
            total = total, local_batches = local_batches ),
        clamped_nodes = clamped )


def _solve_level_segment(
    pieces: __.cabc.Sequence[ _Pieces ],
    caps: __.FloatArray,
    total: int,
    trial: float,
) -> float:
    ''' Closed-form level from pieces active at trial level. '''
    fixed_samples = 0.0
    weighted_intercepts = 0.0
    inverse_slopes = 0.0
    for i, cap in enumerate( caps ):
        candidates = [
            ( ( trial - intercepts[ i ] ) / slopes[ i ],
              intercepts[ i ], slopes[ i ] )
            for intercepts, slopes in pieces ]
        admitted, intercept, slope = min( candidates )
        if admitted <= 0.0: continue
        if admitted >= cap:
            fixed_samples += float( cap )
            continue
        weighted_intercepts += intercept / slope
        inverse_slopes += 1.0 / slope
    if inverse_slopes == 0.0: return trial
    return ( total - fixed_samples + weighted_intercepts ) / inverse_slopes


def _balance(
    admitted: __.FloatArray,
    caps: __.FloatArray,
    total: int,
    clamped: frozenset[ int ],
) -> tuple[ float, ... ]:
    ''' Spreads rounding residue over unclamped nodes. '''
    residue = total - float( admitted.sum( ) )
    free = [ i for i in range( admitted.size ) if i not in clamped ]
    if free and residue:
        for i in free:
            admitted[ i ] = min(
                max( admitted[ i ] + residue / len( free ), 0.0 ), caps[ i ] )
    return tuple( float( b ) for b in admitted )


def _rank_outliers(
    spec: _models.ClusterSpec,
    labels_compute: __.cabc.Sequence[ _models.BottleneckLabels ],
    labels_sync: __.cabc.Sequence[ _models.BottleneckLabels ],
) -> tuple[ dict[ int, _models.BottleneckLabels ], tuple[ int, ... ] ]:
    ''' Fixes nodes agreeing across both checks; ranks the rest.

        Outliers are ordered by fixed synchronization start, then by
        node index.
    '''
    fixed: dict[ int, _models.BottleneckLabels ] = { }
    outliers: list[ int ] = [ ]
    pairs = zip( labels_compute, labels_sync )
    for i, ( first, second ) in enumerate( pairs ):
        if first is second: fixed[ i ] = first
        else: outliers.append( i )
    gamma = spec.comm.gamma
    outliers.sort(
        key = lambda i: (
            spec.nodes[ i ].produce_sync_intercept( gamma ), i ) )
    return fixed, tuple( outliers )


def _rank_crossings(
    spec: _models.ClusterSpec
) -> tuple[ dict[ int, _models.BottleneckLabels ], tuple[ int, ... ] ]:
    ''' Ranks every node by combined time at which it starts computing.

        Below that time the synchronization start binds; above it, the
        computing time does. Computing bottlenecks at any combined time
        thus form a prefix of this ranking.
    '''
    comm = spec.comm
    backward = comm.t_o / ( 1 - comm.gamma )
    crossings: list[ float ] = [ ]
    for node in spec.nodes:
        if node.k > 0:
            b = ( backward - node.m ) / node.k
            crossings.append(
                node.compute_intercept + node.compute_slope * b )
        elif node.m >= backward: crossings.append( -__.math.inf )
        else: crossings.append( __.math.inf )
    outliers = sorted(
        range( spec.size ), key = lambda i: ( crossings[ i ], i ) )
    return { }, tuple( outliers )


def _produce_rankings(
    spec: _models.ClusterSpec,
    labels_compute: __.cabc.Sequence[ _models.BottleneckLabels ],
    labels_sync: __.cabc.Sequence[ _models.BottleneckLabels ],
) -> __.cabc.Iterator[
    tuple[ dict[ int, _models.BottleneckLabels ], tuple[ int, ... ] ]
]:
    ''' Outlier rankings to search, narrowest first. '''
    yield _rank_outliers( spec, labels_compute, labels_sync )
    yield _rank_crossings( spec )


def _produce_warm_boundary(
    outliers: tuple[ int, ... ], warm_start: __.Absential[ Scenario ]
) -> __.Absential[ int ]:
    if __.is_absent( warm_start ): return __.absent
    if len( warm_start.labels ) <= max( outliers, default = -1 ):
        return __.absent
    return sum(
        1 for i in outliers
        if warm_start.labels[ i ] is _models.BottleneckLabels.Compute )


def _solve_boundary(
    spec: _models.ClusterSpec,
    total: int,
    fixed: __.cabc.Mapping[ int, _models.BottleneckLabels ],
    outliers: tuple[ int, ... ],
    boundary: int,
) -> LevelSolution:
    compute_set = { i for i, label in fixed.items( )
                    if label is _models.BottleneckLabels.Compute }
    compute_set.update( outliers[ : boundary ] )
    comm_set = set( range( spec.size ) ) - compute_set
    return solve_mixed( spec, total, compute_set, comm_set )


def _verify_boundary(
    spec: _models.ClusterSpec,
    total: int,
    fixed: __.cabc.Mapping[ int, _models.BottleneckLabels ],
    outliers: tuple[ int, ... ],
    boundary: int,
) -> tuple[ bool, bool ]:
    ''' Checks overlap hypothesis against its own solution.

        Returns whether some communication node computes past the
        combined time and whether some computing node starts
        synchronization past the common start.
    '''
    solution = _solve_boundary( spec, total, fixed, outliers, boundary )
    comm = spec.comm
    level = solution.level
    tolerance = __.TIME_TOLERANCE * max( abs( level ), 1.0 )
    computing = set( outliers[ : boundary ] ) | {
        i for i, label in fixed.items( )
        if label is _models.BottleneckLabels.Compute }
    comm_late = compute_late = False
    for i, b in enumerate( solution.allocation.local_batches ):
        if b <= 0.0: continue
        node = spec.nodes[ i ]
        if i in computing:
            start = _models.sync_start( node, comm, b )
            compute_late |= start > level - comm.t_o + tolerance
        else:
            finish = _models.compute_time( node, b )
            comm_late |= finish > level + tolerance
    return comm_late, compute_late


def _search_boundary(
    spec: _models.ClusterSpec,
    total: int,
    fixed: __.cabc.Mapping[ int, _models.BottleneckLabels ],
    outliers: tuple[ int, ... ],
    warm: __.Absential[ int ],
) -> __.Absential[ int ]:
    ''' Binary search for verified boundary, then exhaustive scan. '''
    begin, end = 0, len( outliers )
    boundary = ( begin + end ) // 2 if __.is_absent( warm ) else warm
    tried: set[ int ] = set( )
    while begin <= end:
        tried.add( boundary )
        comm_late, compute_late = _verify_boundary(
            spec, total, fixed, outliers, boundary )
        _scribe.debug(
            'Boundary %d in [%d, %d]: communication late %s, '
            'computing late %s.',
            boundary, begin, end, comm_late, compute_late )
        if not ( comm_late or compute_late ): return boundary
        if comm_late and compute_late: break
        if comm_late: begin = boundary + 1
        else: end = boundary - 1
        boundary = ( begin + end ) // 2
    for boundary in range( len( outliers ) + 1 ):
        if boundary in tried: continue
        verdict = _verify_boundary( spec, total, fixed, outliers, boundary )
        if verdict == ( False, False ):
            _scribe.debug( 'Boundary %d verified by scan.', boundary )
            return boundary
    return __.absent


def _produce_solution(
    spec: _models.ClusterSpec,
    solution: LevelSolution,
    kind: ScenarioKinds,
    boundary: __.Absential[ int ] = __.absent,
) -> OptPerfSolution:
    allocation = solution.allocation
    return OptPerfSolution(
        batch_time = _models.cluster_batch_time( spec, allocation ),
        alloc_real = allocation,
        alloc_int = round_allocation( allocation ),
        scenario = Scenario(
            kind = kind,
            labels = _classify_all( spec, allocation ),
            boundary = boundary ),
        clamped_nodes = solution.clamped_nodes )
