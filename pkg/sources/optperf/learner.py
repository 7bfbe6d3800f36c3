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



''' Online estimation of performance models from noisy telemetry. '''


from . import __
from . import exceptions as _exceptions
from . import models as _models


_scribe = __.logging.getLogger( __name__ )

GAMMA_MINIMUM = 0.01
GAMMA_MAXIMUM = 0.99


class TimingObservation( __.immut.DataclassObject ):
    ''' Timing telemetry of one node for one batch. '''

    epoch: __.typx.Annotated[ int, __.ddoc.Doc( 'Epoch index.' ) ]
    batch: __.typx.Annotated[
        int, __.ddoc.Doc( 'Batch index within epoch.' ) ]
    node_id: __.typx.Annotated[ int, __.ddoc.Doc( 'Observing node.' ) ]
    b: __.typx.Annotated[ int, __.ddoc.Doc( 'Local batch size.' ) ]
    a_time: __.typx.Annotated[
        float,
        __.ddoc.Doc(
            'Seconds of data loading, forward pass, and optimizer step.' ) ]
    p_time: __.typx.Annotated[
        float, __.ddoc.Doc( 'Seconds of backpropagation.' ) ]
    sync_start_obs: __.typx.Annotated[
        float,
        __.ddoc.Doc( 'Seconds until first gradient bucket was ready.' ) ]
    batch_time_obs: __.typx.Annotated[
        float, __.ddoc.Doc( 'Seconds until batch completed.' ) ]
    gamma_obs: __.typx.Annotated[
        float, __.ddoc.Doc( 'Measured overlap ratio.' ) ]
    t_o_obs: __.typx.Annotated[
        float,
        __.ddoc.Doc( 'Measured synchronization time of all but last bucket.' )
    ]
    t_u_obs: __.typx.Annotated[
        float,
        __.ddoc.Doc( 'Measured synchronization time of last bucket.' ) ]

    def __post_init__( self ) -> None:
        for name in (
            'a_time', 'p_time', 'sync_start_obs', 'batch_time_obs',
            't_o_obs', 't_u_obs',
        ):
            value = getattr( self, name )
            if not value >= 0:
                raise _exceptions.DomainInvalidity(
                    name, f'must be non-negative, got {value!r}' )

    def render_as_json( self ) -> dict[ str, __.typx.Any ]:
        ''' Renders observation as JSON-compatible dictionary. '''
        return {
            name: getattr( self, name ) for name in (
                'epoch', 'batch', 'node_id', 'b', 'a_time', 'p_time',
                'sync_start_obs', 'batch_time_obs', 'gamma_obs',
                't_o_obs', 't_u_obs' ) }


class LearnedModel( __.immut.DataclassObject ):
    ''' Snapshot of learned cluster performance model. '''

    observations: __.typx.Annotated[
        tuple[ tuple[ TimingObservation, ... ], ... ],
        __.ddoc.Doc( 'All retained observations, grouped by node.' ) ]
    nodes: __.typx.Annotated[
        tuple[ __.Absential[ _models.NodeComputeModel ], ... ],
        __.ddoc.Doc( 'Fitted model per node, once determinable.' ) ]
    gamma_variances: __.typx.Annotated[
        tuple[ float, ... ],
        __.ddoc.Doc(
            'Sample variance of measured overlap ratio per node. '
            'Not a number until two measurements exist.' ) ]
    gamma: __.typx.Annotated[
        __.Absential[ float ],
        __.ddoc.Doc( 'Pooled overlap ratio across nodes.' ) ] = __.absent
    t_o: __.typx.Annotated[
        __.Absential[ float ],
        __.ddoc.Doc( 'Estimated overlappable synchronization time.' )
    ] = __.absent
    t_u: __.typx.Annotated[
        __.Absential[ float ],
        __.ddoc.Doc( 'Estimated last-bucket synchronization time.' )
    ] = __.absent
    clamped_nodes: __.typx.Annotated[
        frozenset[ int ],
        __.ddoc.Doc( 'Nodes whose fit needed a coefficient clamped at 0.' )
    ] = frozenset( )

    @property
    def observation_counts( self ) -> tuple[ int, ... ]:
        ''' Number of observations retained per node. '''
        return tuple( len( group ) for group in self.observations )

    @property
    def ready( self ) -> bool:
        ''' Whether every node and the synchronization model are fitted. '''
        return (
            all( not __.is_absent( node ) for node in self.nodes )
            and all( count >= 2 for count in self.observation_counts )
            and not __.is_absent( self.gamma )
            and not __.is_absent( self.t_o )
            and not __.is_absent( self.t_u ) )

    def produce_spec(
        self, caps: __.Absential[ tuple[ float, ... ] ] = __.absent
    ) -> _models.ClusterSpec:
        ''' Produces cluster specification from learned model. '''
        if not self.ready:
            missing = tuple(
                i for i, node in enumerate( self.nodes )
                if __.is_absent( node ) )
            raise _exceptions.ObservationsInsufficiency(
                missing[ 0 ] if missing else 0, 'model not ready' )
        nodes = tuple(
            __.typx.cast( _models.NodeComputeModel, node )
            for node in self.nodes )
        comm = _models.CommModel(
            gamma = __.typx.cast( float, self.gamma ),
            t_o = __.typx.cast( float, self.t_o ),
            t_u = __.typx.cast( float, self.t_u ) )
        return _models.ClusterSpec( nodes = nodes, comm = comm, caps = caps )


def produce_empty_model( size: int ) -> LearnedModel:
    ''' Produces learned model with no observations for cluster size. '''
    return LearnedModel(
        observations = ( ( ), ) * size,
        nodes = ( __.absent, ) * size,
        gamma_variances = ( __.math.nan, ) * size )


def fit_compute_model(
    observations: __.cabc.Sequence[ TimingObservation ]
) -> _models.NodeComputeModel:
    ''' Fits linear computing time model of one node by least squares.

        With exactly two distinct batch sizes, this interpolates.
    '''
    model, _ = _fit_compute_model( observations )
    return model


def estimate_gamma(
    samples: __.cabc.Sequence[ __.cabc.Sequence[ float ] ]
) -> float:
    ''' Pools per-node overlap ratio measurements by inverse variance.

        Measurements are clamped into a valid open range first. Nodes
        with zero sample variance dominate: a single one is returned
        as is, several are averaged with equal weights.
    '''
    if not samples:
        raise _exceptions.EstimatorInvalidity(
            'overlap ratio', 'no nodes supplied' )
    means, variances = _summarize_gammas( samples )
    return pool_inverse_variance( means, variances )


def pool_inverse_variance(
    means: __.npt.ArrayLike, variances: __.npt.ArrayLike
) -> float:
    ''' Inverse-variance weighted mean of per-node means. '''
    means_ = __.np.asarray( means, dtype = __.np.float64 )
    variances_ = __.np.asarray( variances, dtype = __.np.float64 )
    if means_.size == 0 or means_.shape != variances_.shape:
        raise _exceptions.EstimatorInvalidity(
            'inverse-variance pooling',
            'means and variances must be non-empty and aligned' )
    if means_.size == 1: return float( means_[ 0 ] )
    exact = variances_ == 0.0
    if __.np.any( exact ): return float( means_[ exact ].mean( ) )
    weights = 1.0 / variances_
    return float( ( weights * means_ ).sum( ) / weights.sum( ) )


def estimate_comm_time( observations: __.npt.ArrayLike ) -> float:
    ''' Estimates synchronization time with the minimum rule.

        Rows are nodes and columns are batches; a flat sequence holds one
        value per node. Each node's observations are averaged and the
        smallest mean is taken, since only the last node to become ready
        sees the undelayed synchronization.
    '''
    values = __.np.asarray( observations, dtype = __.np.float64 )
    if values.ndim == 1: values = values[ :, None ]
    if values.size == 0:
        raise _exceptions.EstimatorInvalidity(
            'communication time', 'no observations' )
    return float( values.mean( axis = 1 ).min( ) )


def update(
    learned: LearnedModel,
    observations: __.cabc.Iterable[ TimingObservation ],
) -> LearnedModel:
    ''' Appends observations and refits models of nodes with new data. '''
    additions: dict[ int, list[ TimingObservation ] ] = { }
    for observation in observations:
        if not 0 <= observation.node_id < len( learned.nodes ):
            raise _exceptions.AllocationMismatch(
                len( learned.nodes ), observation.node_id + 1 )
        additions.setdefault( observation.node_id, [ ] ).append(
            observation )
    if not additions: return learned
    groups = list( learned.observations )
    nodes = list( learned.nodes )
    clamped = set( learned.clamped_nodes )
    for node_id, added in additions.items( ):
        groups[ node_id ] = groups[ node_id ] + tuple( added )
        try: model, clamp = _fit_compute_model( groups[ node_id ] )
        except _exceptions.ObservationsInsufficiency:
            _scribe.debug(
                'Node %d: model not yet determinable from %d observations.',
                node_id, len( groups[ node_id ] ) )
            continue
        nodes[ node_id ] = model
        if clamp: clamped.add( node_id )
        else: clamped.discard( node_id )
        _scribe.debug( 'Node %d: refitted model %s.', node_id, model )
    gamma_samples = [
        [ observation.gamma_obs for observation in group ]
        for group in groups ]
    gamma_variances = tuple(
        float( __.np.var(
            __.np.clip( samples, GAMMA_MINIMUM, GAMMA_MAXIMUM ), ddof = 1 ) )
        if len( samples ) >= 2 else __.math.nan
        for samples in gamma_samples )
    gamma: __.Absential[ float ] = __.absent
    if all( len( samples ) >= 2 for samples in gamma_samples ):
        gamma = estimate_gamma( gamma_samples )
    t_o, t_u = _estimate_comm_times( groups )
    return LearnedModel(
        observations = tuple( groups ),
        nodes = tuple( nodes ),
        gamma_variances = gamma_variances,
        gamma = gamma, t_o = t_o, t_u = t_u,
        clamped_nodes = frozenset( clamped ) )


def _estimate_comm_times(
    groups: __.cabc.Sequence[ __.cabc.Sequence[ TimingObservation ] ]
) -> tuple[ __.Absential[ float ], __.Absential[ float ] ]:
    ''' Estimates both synchronization times over batches all nodes saw.

        The minimum rule applies within each epoch, where allocation and
        hence the waiting pattern are fixed. Epoch estimates are averaged,
        weighted by their batch counts.
    '''
    keyed: list[ dict[ tuple[ int, int ], TimingObservation ] ] = [
        { ( o.epoch, o.batch ): o for o in group } for group in groups ]
    shared = set( keyed[ 0 ] ).intersection( *keyed[ 1: ] )
    if not shared: return __.absent, __.absent
    epochs: dict[ int, list[ tuple[ int, int ] ] ] = { }
    for key in sorted( shared ):
        epochs.setdefault( key[ 0 ], [ ] ).append( key )
    weights = [ len( batches ) for batches in epochs.values( ) ]
    t_o = __.np.average( [
        estimate_comm_time( [
            [ table[ key ].t_o_obs for key in batches ] for table in keyed ] )
        for batches in epochs.values( ) ], weights = weights )
    t_u = __.np.average( [
        estimate_comm_time( [
            [ table[ key ].t_u_obs for key in batches ] for table in keyed ] )
        for batches in epochs.values( ) ], weights = weights )
    return float( t_o ), float( t_u )


def _fit_compute_model(
    observations: __.cabc.Sequence[ TimingObservation ]
) -> tuple[ _models.NodeComputeModel, bool ]:
    if not observations:
        raise _exceptions.ObservationsInsufficiency( 0, 'no observations' )
    node_id = observations[ 0 ].node_id
    batches = __.np.array(
        [ o.b for o in observations ], dtype = __.np.float64 )
    if __.np.unique( batches ).size < 2:
        raise _exceptions.ObservationsInsufficiency(
            node_id, 'need at least two distinct local batch sizes' )
    q, s, q_clamped = _fit_line(
        batches, __.np.array( [ o.a_time for o in observations ] ) )
    k, m, k_clamped = _fit_line(
        batches, __.np.array( [ o.p_time for o in observations ] ) )
    clamped = q_clamped or k_clamped
    if clamped:
        _scribe.warning(
            'Node %d: fitted coefficient clamped at zero.', node_id )
    model = _models.NodeComputeModel(
        node_id = node_id, q = q, s = s, k = k, m = m )
    return model, clamped


def _fit_line(
    xs: __.FloatArray, ys: __.FloatArray
) -> tuple[ float, float, bool ]:
    ''' Least-squares slope and intercept, both kept non-negative. '''
    design = __.np.column_stack( ( xs, __.np.ones_like( xs ) ) )
    solution, *_ = __.np.linalg.lstsq( design, ys, rcond = None )
    slope, intercept = float( solution[ 0 ] ), float( solution[ 1 ] )
    if slope < 0:
        return 0.0, max( float( ys.mean( ) ), 0.0 ), True
    if intercept < 0:
        slope = float( ( xs * ys ).sum( ) / ( xs * xs ).sum( ) )
        return max( slope, 0.0 ), 0.0, True
    return slope, intercept, False


def _summarize_gammas(
    samples: __.cabc.Sequence[ __.cabc.Sequence[ float ] ]
) -> tuple[ __.FloatArray, __.FloatArray ]:
    means: list[ float ] = [ ]
    variances: list[ float ] = [ ]
    for node_id, node_samples in enumerate( samples ):
        values = __.np.asarray( node_samples, dtype = __.np.float64 )
        if values.size == 0 or ( len( samples ) > 1 and values.size < 2 ):
            raise _exceptions.ObservationsInsufficiency(
                node_id, 'need at least two overlap ratio measurements' )
        clipped = __.np.clip( values, GAMMA_MINIMUM, GAMMA_MAXIMUM )
        if not __.np.array_equal( clipped, values ):
            _scribe.warning(
                'Node %d: %d overlap ratio measurements clamped.',
                node_id, int( ( clipped != values ).sum( ) ) )
        means.append( float( clipped.mean( ) ) )
        variances.append(
            float( clipped.var( ddof = 1 ) ) if clipped.size > 1 else 0.0 )
    return __.np.array( means ), __.np.array( variances )
