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



''' Epoch-level adaptive training driver.

    The first epoch splits the batch evenly; the second splits it in
    inverse proportion to measured per-sample time. Once every node has
    run two distinct local batch sizes, the learned model drives
    allocation, and the total batch size maximizing goodput is chosen
    from a table of candidate solutions cached across epochs.
'''


from . import __
from . import exceptions as _exceptions
from . import gns as _gns
from . import learner as _learner
from . import models as _models
from . import optimizer as _optimizer
from . import simulator as _simulator


_scribe = __.logging.getLogger( __name__ )


Solver: __.typx.TypeAlias = __.cabc.Callable[
    [ _models.ClusterSpec, int, __.Absential[ _optimizer.Scenario ] ],
    _optimizer.OptPerfSolution ]


class AdaptiveSettings( __.immut.DataclassObject ):
    ''' Settings of batch size adaptation and epoch structure. '''

    b_min: __.typx.Annotated[
        int, __.ddoc.Doc( 'Smallest total batch size candidate.' ) ]
    b_max: __.typx.Annotated[
        int, __.ddoc.Doc( 'Largest total batch size candidate.' ) ]
    candidates: __.typx.Annotated[
        int, __.ddoc.Doc( 'Number of geometrically spaced candidates.' )
    ] = 8
    b_ref: __.typx.Annotated[
        __.Absential[ int ],
        __.ddoc.Doc(
            'Batch size of unit statistical efficiency. '
            'Initial batch size when absent.' ) ] = __.absent
    initial_batch: __.typx.Annotated[
        __.Absential[ int ],
        __.ddoc.Doc(
            'Total batch size before models are ready. '
            'Smallest candidate when absent.' ) ] = __.absent
    fixed_batch: __.typx.Annotated[
        __.Absential[ int ],
        __.ddoc.Doc(
            'Total batch size for every epoch; disables selection.' )
    ] = __.absent
    batches_per_epoch: __.typx.Annotated[
        int, __.ddoc.Doc( 'Simulated batches per epoch.' ) ] = 50
    epochs: __.typx.Annotated[
        int, __.ddoc.Doc( 'Number of epochs.' ) ] = 10
    ema_decay: __.typx.Annotated[
        float, __.ddoc.Doc( 'Decay of noise scale moving averages.' )
    ] = 0.9

    def __post_init__( self ) -> None:
        if self.b_min < 1 or self.b_max < self.b_min:
            raise _exceptions.DomainInvalidity(
                'b_min', f'need 1 <= b_min <= b_max, '
                f'got {self.b_min} and {self.b_max}' )
        for name in ( 'candidates', 'batches_per_epoch', 'epochs' ):
            value = getattr( self, name )
            if value < 1:
                raise _exceptions.DomainInvalidity(
                    name, f'must be positive, got {value}' )
        for name in ( 'b_ref', 'initial_batch', 'fixed_batch' ):
            value = getattr( self, name )
            if not __.is_absent( value ) and value < 1:
                raise _exceptions.DomainInvalidity(
                    name, f'must be positive, got {value}' )
        if not 0 <= self.ema_decay < 1:
            raise _exceptions.DomainInvalidity(
                'ema_decay', f'must lie in [0, 1), got {self.ema_decay!r}' )

    def produce_initial_batch( self ) -> int:
        ''' Total batch size of the model-free epochs. '''
        if not __.is_absent( self.fixed_batch ): return self.fixed_batch
        if not __.is_absent( self.initial_batch ): return self.initial_batch
        return self.b_min

    def produce_b_ref( self ) -> int:
        ''' Batch size of unit statistical efficiency. '''
        if not __.is_absent( self.b_ref ): return self.b_ref
        return self.produce_initial_batch( )


class CandidateTable( __.immut.DataclassObject ):
    ''' Cached solutions for ascending total batch size candidates. '''

    candidates: __.typx.Annotated[
        tuple[ int, ... ], __.ddoc.Doc( 'Strictly ascending totals.' ) ]
    entries: __.typx.Annotated[
        tuple[ __.Absential[ _optimizer.OptPerfSolution ], ... ],
        __.ddoc.Doc( 'Solution per candidate; absent if infeasible.' ) ]
    stale: __.typx.Annotated[
        bool, __.ddoc.Doc( 'Whether the table awaits a rebuild.' )
    ] = False

    def __post_init__( self ) -> None:
        if len( self.entries ) != len( self.candidates ):
            raise _exceptions.AllocationMismatch(
                len( self.candidates ), len( self.entries ) )
        pairs = zip( self.candidates, self.candidates[ 1: ] )
        if any( later <= earlier for earlier, later in pairs ):
            raise _exceptions.DomainInvalidity(
                'candidates',
                f'must be strictly ascending, got {self.candidates}' )

    def with_entry(
        self,
        index: int,
        solution: _optimizer.OptPerfSolution,
        stale: bool = False,
    ) -> __.typx.Self:
        ''' Returns table with one candidate's solution replaced. '''
        entries = list( self.entries )
        entries[ index ] = solution
        return type( self )(
            candidates = self.candidates, entries = tuple( entries ),
            stale = stale or self.stale )


class Selection( __.immut.DataclassObject ):
    ''' Chosen total batch size and its merit. '''

    index: __.typx.Annotated[
        int, __.ddoc.Doc( 'Position of candidate in table.' ) ]
    total: __.typx.Annotated[ int, __.ddoc.Doc( 'Total batch size.' ) ]
    throughput: __.typx.Annotated[
        float, __.ddoc.Doc( 'Predicted samples per second.' ) ]
    efficiency: __.typx.Annotated[
        float, __.ddoc.Doc( 'Statistical efficiency per sample.' ) ]

    @property
    def goodput( self ) -> float:
        ''' Throughput scaled by statistical efficiency. '''
        return self.throughput * self.efficiency


class EpochReport( __.immut.DataclassObject ):
    ''' Outcome of one training epoch. '''

    epoch: __.typx.Annotated[ int, __.ddoc.Doc( 'Epoch index.' ) ]
    total: __.typx.Annotated[
        int, __.ddoc.Doc( 'Total batch size used.' ) ]
    allocation: __.typx.Annotated[
        tuple[ int, ... ], __.ddoc.Doc( 'Local batch size per node.' ) ]
    realized_time: __.typx.Annotated[
        float, __.ddoc.Doc( 'Mean realized batch time.' ) ]
    efficiency: __.typx.Annotated[
        float, __.ddoc.Doc( 'Statistical efficiency at total.' ) ]
    ready: __.typx.Annotated[
        bool, __.ddoc.Doc( 'Whether the learned model drove allocation.' ) ]
    solver_calls: __.typx.Annotated[
        int, __.ddoc.Doc( 'Allocation solver invocations this epoch.' ) ]
    predicted_time: __.typx.Annotated[
        __.Absential[ float ],
        __.ddoc.Doc( 'Batch time predicted by learned model.' )
    ] = __.absent
    b_noise: __.typx.Annotated[
        __.Absential[ float ],
        __.ddoc.Doc( 'Smoothed gradient noise scale after epoch.' )
    ] = __.absent
    scenario: __.typx.Annotated[
        __.Absential[ _optimizer.Scenario ],
        __.ddoc.Doc( 'Overlap state of chosen allocation.' ) ] = __.absent

    def __post_init__( self ) -> None:
        if not self.realized_time > 0:
            raise _exceptions.DomainInvalidity(
                'realized_time',
                f'must be positive, got {self.realized_time!r}' )

    @property
    def throughput( self ) -> float:
        ''' Realized samples per second. '''
        return self.total / self.realized_time

    @property
    def goodput( self ) -> float:
        ''' Realized throughput scaled by statistical efficiency. '''
        return self.throughput * self.efficiency

    @property
    def prediction_error( self ) -> __.Absential[ float ]:
        ''' Relative deviation of prediction from realized time. '''
        if __.is_absent( self.predicted_time ): return __.absent
        return abs( self.predicted_time - self.realized_time ) / (
            self.realized_time )

    def render_as_json( self ) -> dict[ str, __.typx.Any ]:
        ''' Renders report as JSON-compatible dictionary. '''
        return {
            'epoch': self.epoch,
            'chosen_B': self.total,
            'allocation': list( self.allocation ),
            'predicted_T': _render_absential( self.predicted_time ),
            'realized_T_mean': self.realized_time,
            'b_noise': _render_absential( self.b_noise ),
            'efficiency': self.efficiency,
            'goodput': self.goodput,
            'ready': self.ready,
            'scenario': (
                None if __.is_absent( self.scenario )
                else self.scenario.render_as_text( ) ),
            'prediction_error': _render_absential( self.prediction_error ),
            'solver_calls': self.solver_calls,
        }


class CountingSolver:
    ''' Allocation solver recording how often it is invoked. '''

    def __init__( self, solver: Solver = _optimizer.find_optperf ) -> None:
        self.solver = solver
        self.calls = 0

    def __call__(
        self,
        spec: _models.ClusterSpec,
        total: int,
        warm_start: __.Absential[ _optimizer.Scenario ] = __.absent,
    ) -> _optimizer.OptPerfSolution:
        self.calls += 1
        return self.solver( spec, total, warm_start )


def enumerate_candidates(
    b_min: int, b_max: int, count: int
) -> tuple[ int, ... ]:
    ''' Geometrically spaced integer totals, both ends included. '''
    if b_min < 1 or b_max < b_min or count < 1:
        raise _exceptions.DomainInvalidity(
            'candidates',
            f'need 1 <= b_min <= b_max and count >= 1, '
            f'got {b_min}, {b_max}, {count}' )
    if count >= b_max - b_min + 1:
        return tuple( range( b_min, b_max + 1 ) )
    if count == 1: return ( b_min, )
    points = __.np.geomspace( b_min, b_max, count )
    return tuple( sorted( { int( round( point ) ) for point in points } ) )


def init_table(
    spec: _models.ClusterSpec,
    candidates: __.cabc.Sequence[ int ],
    solver: Solver = _optimizer.find_optperf,
) -> CandidateTable:
    ''' Solves every candidate in ascending order.

        Each solve starts from the overlap state of the previous one.
    '''
    entries: list[ __.Absential[ _optimizer.OptPerfSolution ] ] = [ ]
    warm: __.Absential[ _optimizer.Scenario ] = __.absent
    computing: frozenset[ int ] = frozenset( )
    for total in candidates:
        try: solution = solver( spec, total, warm )
        except (
            _exceptions.AllocationInfeasibility,
            _exceptions.ModelSingularity,
        ) as exception:
            _scribe.warning(
                'Candidate %d is infeasible: %s', total, exception )
            entries.append( __.absent )
            continue
        entries.append( solution )
        warm = solution.scenario
        computing = _check_monotonicity( total, computing, solution )
    _scribe.debug( 'Built candidate table over %d totals.', len( entries ) )
    return CandidateTable(
        candidates = tuple( candidates ), entries = tuple( entries ) )


def ensure_table(
    table: __.Absential[ CandidateTable ],
    spec: _models.ClusterSpec,
    candidates: __.cabc.Sequence[ int ],
    solver: Solver = _optimizer.find_optperf,
) -> CandidateTable:
    ''' Returns table, rebuilt when absent or stale. '''
    if not __.is_absent( table ) and not table.stale: return table
    if not __.is_absent( table ):
        _scribe.info( 'Rebuilding stale candidate table.' )
    return init_table( spec, candidates, solver )


def refresh_entry(
    table: CandidateTable,
    spec: _models.ClusterSpec,
    index: int,
    solver: Solver = _optimizer.find_optperf,
) -> tuple[ _optimizer.OptPerfSolution, CandidateTable ]:
    ''' Re-solves one cached candidate under refit models.

        The cached overlap state warm starts the solve. If the fresh
        solution lands in another overlap state, the returned table is
        marked stale, since other candidates likely moved too.
    '''
    cached = table.entries[ index ]
    if __.is_absent( cached ):
        raise _exceptions.DomainInvalidity(
            'index', f'candidate {index} holds no solution' )
    total = table.candidates[ index ]
    solution = solver( spec, total, cached.scenario )
    changed = solution.labels != cached.labels
    if changed:
        _scribe.info(
            'Overlap state of total %d changed; '
            'candidate table marked stale.', total )
    return solution, table.with_entry( index, solution, stale = changed )


def compute_efficiency( total: float, b_noise: float, b_ref: float ) -> float:
    ''' Statistical efficiency relative to reference batch size. '''
    noise = max( b_noise, 0.0 )
    return ( b_ref + noise ) / ( total + noise )


def select_batch_size(
    table: CandidateTable, b_noise: float, b_ref: float
) -> Selection:
    ''' Chooses candidate of maximum goodput; ties favor smaller totals. '''
    if not b_noise >= 0:
        raise _exceptions.DomainInvalidity(
            'b_noise', f'must be non-negative, got {b_noise!r}' )
    best: __.Absential[ Selection ] = __.absent
    for index, ( total, entry ) in enumerate(
        zip( table.candidates, table.entries )
    ):
        if __.is_absent( entry ): continue
        selection = Selection(
            index = index, total = total,
            throughput = total / entry.batch_time,
            efficiency = compute_efficiency( total, b_noise, b_ref ) )
        if __.is_absent( best ) or (
            selection.goodput > best.goodput * ( 1 + __.TIME_TOLERANCE )
        ): best = selection
    if __.is_absent( best ): raise _exceptions.CandidatesAbsence( )
    return best


def run_training(
    world: _simulator.TruthWorld, settings: AdaptiveSettings
) -> tuple[ EpochReport, ... ]:
    ''' Runs adaptive training against simulated world. '''
    return _Trainer( world, settings ).run( )


class _Trainer:
    ''' Mutable state of one training run. '''

    def __init__(
        self, world: _simulator.TruthWorld, settings: AdaptiveSettings
    ) -> None:
        self.world = world
        self.settings = settings
        self.size = world.true_spec.size
        self.simulator = _simulator.Simulator( world )
        self.learned = _learner.produce_empty_model( self.size )
        self.tracker = _gns.NoiseScaleTracker( settings.ema_decay )
        self.solver = CountingSolver( )
        self.table: __.Absential[ CandidateTable ] = __.absent
        self.b_ref = settings.produce_b_ref( )
        if __.is_absent( settings.fixed_batch ):
            self.candidates = enumerate_candidates(
                settings.b_min, settings.b_max, settings.candidates )
        else: self.candidates = ( settings.fixed_batch, )
        self.history: list[ tuple[ int, ... ] ] = [ ]

    def run( self ) -> tuple[ EpochReport, ... ]:
        return tuple(
            self._run_epoch( epoch )
            for epoch in range( self.settings.epochs ) )

    def _run_epoch( self, epoch: int ) -> EpochReport:
        calls = self.solver.calls
        predicted: __.Absential[ float ] = __.absent
        scenario: __.Absential[ _optimizer.Scenario ] = __.absent
        if self.learned.ready:
            solution, spec = self._solve_ready( )
            allocation = tuple(
                int( b ) for b in solution.alloc_int.local_batches )
            predicted = _models.cluster_batch_time(
                spec, solution.alloc_int )
            scenario = solution.scenario
        else: allocation = self._allocate_unready( epoch )
        self.history.append( allocation )
        total = sum( allocation )
        realized = self._simulate_epoch( epoch, allocation )
        b_noise = self.tracker.b_noise
        efficiency = compute_efficiency(
            total, 0.0 if __.is_absent( b_noise ) else b_noise, self.b_ref )
        report = EpochReport(
            epoch = epoch, total = total, allocation = allocation,
            realized_time = realized, efficiency = efficiency,
            ready = not __.is_absent( predicted ),
            solver_calls = self.solver.calls - calls,
            predicted_time = predicted, b_noise = b_noise,
            scenario = scenario )
        _scribe.info(
            'Epoch %d: total %d, realized %.6g s, allocation %s.',
            epoch, total, realized, allocation )
        return report

    def _allocate_unready( self, epoch: int ) -> tuple[ int, ... ]:
        total = self.settings.produce_initial_batch( )
        if epoch == 0:
            even = _models.even_split( total, self.size )
            return tuple(
                int( b ) for b in
                _optimizer.round_allocation( even ).local_batches )
        if epoch == 1:
            warm = _optimizer.warmup_allocation(
                self._measure_sample_times( ), total )
            return tuple( int( b ) for b in warm.local_batches )
        return self._nudge( self.history[ -1 ] )

    def _measure_sample_times( self ) -> tuple[ float, ... ]:
        ''' Mean computing time per sample of each node in first epoch. '''
        times: list[ float ] = [ ]
        for group in self.learned.observations:
            first = [ o for o in group if o.epoch == 0 and o.b > 0 ]
            times.append( float( __.np.mean( [
                ( o.a_time + o.p_time ) / o.b for o in first ] ) ) )
        return tuple( times )

    def _nudge( self, previous: tuple[ int, ... ] ) -> tuple[ int, ... ]:
        ''' Moves single samples to nodes lacking two distinct batches.

            Needy nodes alternately gain and lose one sample. An odd
            leftover sample is settled on a counterpart node, so the
            total batch size never changes.
        '''
        caps = self.world.true_spec.produce_caps( )
        nudged = list( previous )
        needy = [
            i for i, group in enumerate( self.learned.observations )
            if len( { o.b for o in group } ) < 2 ]
        balance = 0
        last = -1
        for i in needy:
            if balance <= 0 and nudged[ i ] + 1 <= caps[ i ]: step = 1
            elif balance >= 0 and nudged[ i ] > 1: step = -1
            else: continue
            nudged[ i ] += step
            balance += step
            last = i
        if balance:
            step = -balance
            counterpart = _select_counterpart(
                previous, tuple( nudged ), caps, step )
            if counterpart < 0: nudged[ last ] -= balance
            else: nudged[ counterpart ] += step
        _scribe.debug( 'Nudged allocation %s to %s.', previous, nudged )
        return tuple( nudged )

    def _solve_ready(
        self
    ) -> tuple[ _optimizer.OptPerfSolution, _models.ClusterSpec ]:
        spec = self.learned.produce_spec( self.world.true_spec.caps )
        table = ensure_table(
            self.table, spec, self.candidates, self.solver )
        b_noise = self.tracker.b_noise
        noise = 0.0 if __.is_absent( b_noise ) else max( b_noise, 0.0 )
        selection = select_batch_size( table, noise, self.b_ref )
        solution, self.table = refresh_entry(
            table, spec, selection.index, self.solver )
        return solution, spec

    def _simulate_epoch(
        self, epoch: int, allocation: tuple[ int, ... ]
    ) -> float:
        total = sum( allocation )
        alloc = _models.Allocation(
            total = total, local_batches = allocation )
        observations: list[ _learner.TimingObservation ] = [ ]
        times: list[ float ] = [ ]
        for batch in range( self.settings.batches_per_epoch ):
            trace = self.simulator.simulate_batch( alloc, epoch, batch )
            observations.extend( trace.observations )
            times.append( trace.batch_time )
            self._estimate_noise_scale( alloc, epoch )
        self.learned = _learner.update( self.learned, observations )
        return float( __.np.mean( times ) )

    def _estimate_noise_scale(
        self, allocation: _models.Allocation, epoch: int
    ) -> None:
        sample = self.simulator.sample_gradients( allocation, epoch )
        if len( sample.node_ids ) < 2: return
        stats = [
            _gns.LocalGradientStat(
                node_id = node_id, b = b, local_sq_norm = norm )
            for node_id, b, norm in zip(
                sample.node_ids, sample.local_batches,
                sample.local_sq_norms ) ]
        estimate = _gns.gns_estimate(
            stats, sample.global_sq_norm, sum( sample.local_batches ) )
        self.tracker.update( estimate )


def _check_monotonicity(
    total: int,
    computing: frozenset[ int ],
    solution: _optimizer.OptPerfSolution,
) -> frozenset[ int ]:
    ''' Warns when computing bottlenecks vanish as total grows. '''
    current = frozenset(
        i for i, label in enumerate( solution.labels )
        if label is _models.BottleneckLabels.Compute )
    lost = computing - current
    if lost:
        _scribe.warning(
            'Scenario monotonicity counterexample at total %d: '
            'nodes %s stopped computing bottlenecks.',
            total, sorted( lost ) )
    return current


def _select_counterpart(
    previous: tuple[ int, ... ],
    nudged: tuple[ int, ... ],
    caps: __.FloatArray,
    step: int,
) -> int:
    ''' Node able to absorb one sample step; -1 when none can. '''
    eligible = [
        j for j, b in enumerate( nudged )
        if 1 <= b + step <= caps[ j ] and b - previous[ j ] != -step ]
    if not eligible: return -1
    if step < 0: return max( eligible, key = lambda j: ( nudged[ j ], -j ) )
    return min( eligible, key = lambda j: ( nudged[ j ], j ) )


def _render_absential( value: __.Absential[ float ] ) -> float | None:
    return None if __.is_absent( value ) else value
