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



''' Gradient noise scale estimation for unequal local batches.

    Each node pairs its local gradient norm with the global one to form
    unbiased local estimates of the squared true gradient norm and of the
    per-sample covariance trace. Local estimates are combined with the
    weights of minimum variance among unbiased linear combinations.
'''


from . import __
from . import exceptions as _exceptions


_scribe = __.logging.getLogger( __name__ )

CONDITION_MAXIMUM = 1e12


class LocalGradientStat( __.immut.DataclassObject ):
    ''' Local gradient norm of one node. '''

    node_id: __.typx.Annotated[ int, __.ddoc.Doc( 'Reporting node.' ) ]
    b: __.typx.Annotated[ float, __.ddoc.Doc( 'Local batch size.' ) ]
    local_sq_norm: __.typx.Annotated[
        float, __.ddoc.Doc( 'Squared norm of local gradient.' ) ]

    def __post_init__( self ) -> None:
        if not self.b >= 1:
            raise _exceptions.EstimatorInvalidity(
                'local gradient', f'batch must hold a sample, got {self.b}' )
        if not self.local_sq_norm >= 0:
            raise _exceptions.EstimatorInvalidity(
                'local gradient',
                f'squared norm must be non-negative, '
                f'got {self.local_sq_norm!r}' )


class LocalEstimates( __.immut.DataclassObject ):
    ''' Unbiased local estimates from one node. '''

    g_est: __.typx.Annotated[
        float, __.ddoc.Doc( 'Estimate of squared true gradient norm.' ) ]
    s_est: __.typx.Annotated[
        float, __.ddoc.Doc( 'Estimate of per-sample covariance trace.' ) ]


class EstimatorWeights( __.immut.DataclassObject ):
    ''' Combination weights and whether they fell back. '''

    weights: __.typx.Annotated[
        tuple[ float, ... ], __.ddoc.Doc( 'Weights summing to one.' ) ]
    degraded: __.typx.Annotated[
        bool,
        __.ddoc.Doc(
            'Whether a near-singular matrix forced fallback weights.' )
    ] = False


class GnsEstimate( __.immut.DataclassObject ):
    ''' Aggregated estimates and the resulting gradient noise scale. '''

    g_agg: __.typx.Annotated[
        float, __.ddoc.Doc( 'Estimate of squared true gradient norm.' ) ]
    s_agg: __.typx.Annotated[
        float, __.ddoc.Doc( 'Estimate of per-sample covariance trace.' ) ]
    weights_g: __.typx.Annotated[
        tuple[ float, ... ], __.ddoc.Doc( 'Weights of norm estimates.' ) ]
    weights_s: __.typx.Annotated[
        tuple[ float, ... ], __.ddoc.Doc( 'Weights of trace estimates.' ) ]
    degraded: __.typx.Annotated[
        bool, __.ddoc.Doc( 'Whether fallback weights were used.' ) ] = False

    @property
    def usable( self ) -> bool:
        ''' Whether the norm estimate is positive. '''
        return self.g_agg > 0

    @property
    def b_noise( self ) -> __.Absential[ float ]:
        ''' Gradient noise scale; absent when estimate is unusable. '''
        if not self.usable: return __.absent
        return self.s_agg / self.g_agg


class MomentTable( __.immut.DataclassObject ):
    ''' Second moments of local estimates and gradient norms. '''

    g_covariance: __.typx.Annotated[
        tuple[ tuple[ float, ... ], ... ],
        __.ddoc.Doc( 'Covariance matrix of norm estimates.' ) ]
    s_covariance: __.typx.Annotated[
        tuple[ tuple[ float, ... ], ... ],
        __.ddoc.Doc( 'Covariance matrix of trace estimates.' ) ]
    global_sq_variance: __.typx.Annotated[
        float, __.ddoc.Doc( 'Variance of global squared norm.' ) ]
    local_sq_variances: __.typx.Annotated[
        tuple[ float, ... ],
        __.ddoc.Doc( 'Variance of each local squared norm.' ) ]
    global_local_covariances: __.typx.Annotated[
        tuple[ float, ... ],
        __.ddoc.Doc( 'Covariance of global with each local squared norm.' )
    ]

    @property
    def g_variances( self ) -> tuple[ float, ... ]:
        ''' Variance of each norm estimate. '''
        return tuple(
            row[ i ] for i, row in enumerate( self.g_covariance ) )

    @property
    def s_variances( self ) -> tuple[ float, ... ]:
        ''' Variance of each trace estimate. '''
        return tuple(
            row[ i ] for i, row in enumerate( self.s_covariance ) )


class NoiseScaleTracker:
    ''' Exponential moving averages of both aggregated estimates.

        Averages the numerator and denominator separately rather than
        their ratio. Unusable snapshots are skipped.
    '''

    def __init__( self, decay: float = 0.9 ) -> None:
        if not 0 <= decay < 1:
            raise _exceptions.DomainInvalidity(
                'ema_decay', f'must lie in [0, 1), got {decay!r}' )
        self.decay = decay
        self.g_average: __.Absential[ float ] = __.absent
        self.s_average: __.Absential[ float ] = __.absent
        self.skipped = 0

    @property
    def b_noise( self ) -> __.Absential[ float ]:
        ''' Smoothed gradient noise scale. '''
        if __.is_absent( self.g_average ) or __.is_absent( self.s_average ):
            return __.absent
        if self.g_average <= 0: return __.absent
        return self.s_average / self.g_average

    def update( self, estimate: GnsEstimate ) -> None:
        ''' Folds estimate into the averages unless unusable. '''
        if not estimate.usable:
            self.skipped += 1
            _scribe.debug(
                'Skipping unusable noise scale estimate (G = %.6g).',
                estimate.g_agg )
            return
        if __.is_absent( self.g_average ) or __.is_absent( self.s_average ):
            self.g_average = estimate.g_agg
            self.s_average = estimate.s_agg
            return
        keep = self.decay
        self.g_average = keep * self.g_average + ( 1 - keep ) * estimate.g_agg
        self.s_average = keep * self.s_average + ( 1 - keep ) * estimate.s_agg


def aggregate_gradients(
    local_gradients: __.cabc.Sequence[ __.npt.ArrayLike ],
    ratios: __.cabc.Sequence[ float ],
) -> __.FloatArray:
    ''' Combines local gradients weighted by local batch ratio. '''
    vectors = [
        __.np.asarray( g, dtype = __.np.float64 ) for g in local_gradients ]
    if not vectors or len( vectors ) != len( ratios ):
        raise _exceptions.EstimatorInvalidity(
            'aggregate gradient', 'need one ratio per local gradient' )
    if len( { v.shape for v in vectors } ) != 1:
        raise _exceptions.EstimatorInvalidity(
            'aggregate gradient', 'local gradients differ in dimension' )
    if abs( __.math.fsum( ratios ) - 1.0 ) > 1e-9:
        raise _exceptions.EstimatorInvalidity(
            'aggregate gradient',
            f'ratios sum to {__.math.fsum( ratios )!r}, not 1' )
    return __.np.asarray( ratios, dtype = __.np.float64 ) @ __.np.stack(
        vectors )


def local_estimates(
    stat: LocalGradientStat, global_sq_norm: float, total: float
) -> LocalEstimates:
    ''' Forms unbiased local estimates from local and global norms. '''
    b = stat.b
    _validate_batches( 'local estimates', ( b, ), total )
    return LocalEstimates(
        g_est = ( total * global_sq_norm - b * stat.local_sq_norm )
        / ( total - b ),
        s_est = ( b * total / ( total - b ) )
        * ( stat.local_sq_norm - global_sq_norm ) )


def tabulate_local_estimates(
    local_sq_norms: __.npt.ArrayLike,
    global_sq_norms: __.npt.ArrayLike,
    local_batches: __.cabc.Sequence[ float ],
) -> tuple[ __.FloatArray, __.FloatArray ]:
    ''' Local estimates for many draws at once.

        Rows are draws and columns are nodes; the total is the sum of
        local batches.
    '''
    batches = __.np.asarray( local_batches, dtype = __.np.float64 )
    total = float( batches.sum( ) )
    _validate_batches( 'local estimates', batches, total )
    local = __.np.asarray( local_sq_norms, dtype = __.np.float64 )
    global_ = __.np.asarray(
        global_sq_norms, dtype = __.np.float64 )[ :, None ]
    g_est = ( total * global_ - batches * local ) / ( total - batches )
    s_est = ( batches * total / ( total - batches ) ) * ( local - global_ )
    return g_est, s_est


def weight_matrices(
    local_batches: __.cabc.Sequence[ float ], total: float
) -> tuple[ __.FloatArray, __.FloatArray ]:
    ''' Relative covariance matrices of both local estimate families.

        Common factor of four times squared gradient norm times
        covariance trace is dropped.
    '''
    b = __.np.asarray( local_batches, dtype = __.np.float64 )
    _validate_batches( 'weight matrices', b, total )
    rest = total - b
    g_matrix = ( total * total - b[ :, None ] ** 2 - b[ None, : ] ** 2 ) / (
        total * __.np.outer( rest, rest ) )
    __.np.fill_diagonal(
        g_matrix, ( total + 2 * b ) / ( total * total - total * b ) )
    s_matrix = (
        __.np.outer( b, b ) * ( total - b[ :, None ] - b[ None, : ] )
        / __.np.outer( rest, rest ) )
    __.np.fill_diagonal( s_matrix, total * b / rest )
    return g_matrix, s_matrix


def optimal_weights(
    matrix: __.npt.ArrayLike,
    fallback: __.Absential[ __.cabc.Sequence[ float ] ] = __.absent,
) -> EstimatorWeights:
    ''' Minimum-variance weights summing to one for covariance matrix.

        Near-singular matrices fall back to weights proportional to the
        supplied values (local batch sizes), or to uniform weights.
    '''
    a = __.np.atleast_2d( __.np.asarray( matrix, dtype = __.np.float64 ) )
    size = a.shape[ 0 ]
    if size == 1: return EstimatorWeights( weights = ( 1.0, ) )
    ones = __.np.ones( size )
    try:
        if __.np.linalg.cond( a ) > CONDITION_MAXIMUM:
            raise __.np.linalg.LinAlgError( 'ill-conditioned' )
        solution = __.np.linalg.solve( a, ones )
        if not __.np.all( __.np.isfinite( solution ) ) or not solution.sum( ):
            raise __.np.linalg.LinAlgError( 'degenerate' )
    except __.np.linalg.LinAlgError:
        _scribe.warning(
            'Near-singular estimator covariance; using fallback weights.' )
        base = ones if __.is_absent( fallback ) else __.np.asarray(
            fallback, dtype = __.np.float64 )
        return EstimatorWeights(
            weights = tuple( float( w ) for w in base / base.sum( ) ),
            degraded = True )
    weights = solution / solution.sum( )
    return EstimatorWeights( weights = tuple( float( w ) for w in weights ) )


def gns_estimate(
    stats: __.cabc.Sequence[ LocalGradientStat ],
    global_sq_norm: float,
    total: float,
) -> GnsEstimate:
    ''' Estimates gradient noise scale from all nodes' gradient norms. '''
    if len( stats ) < 2:
        raise _exceptions.EstimatorInvalidity(
            'gradient noise scale', 'need at least two nodes' )
    batches = tuple( stat.b for stat in stats )
    estimates = [
        local_estimates( stat, global_sq_norm, total ) for stat in stats ]
    g_matrix, s_matrix = weight_matrices( batches, total )
    weights_g = optimal_weights( g_matrix, batches )
    weights_s = optimal_weights( s_matrix, batches )
    g_agg = __.math.fsum(
        w * e.g_est for w, e in zip( weights_g.weights, estimates ) )
    s_agg = __.math.fsum(
        w * e.s_est for w, e in zip( weights_s.weights, estimates ) )
    return GnsEstimate(
        g_agg = g_agg, s_agg = s_agg,
        weights_g = weights_g.weights, weights_s = weights_s.weights,
        degraded = weights_g.degraded or weights_s.degraded )


def predicted_moments(
    local_batches: __.cabc.Sequence[ float ],
    total: float,
    true_g_sq: float,
    tr_sigma: float,
) -> MomentTable:
    ''' Closed-form moments by first-order (delta method) expansion.

        Treats squared norm variance as four times squared gradient norm
        times covariance trace over batch size.
    '''
    b = __.np.asarray( local_batches, dtype = __.np.float64 )
    g_matrix, s_matrix = weight_matrices( b, total )
    scale = 4 * true_g_sq * tr_sigma
    return MomentTable(
        g_covariance = _render_matrix( scale * g_matrix ),
        s_covariance = _render_matrix( scale * s_matrix ),
        global_sq_variance = scale / total,
        local_sq_variances = tuple( float( v ) for v in scale / b ),
        global_local_covariances = tuple(
            float( v ) for v in scale * b / ( total * total ) ) )


def exact_moments(
    local_batches: __.cabc.Sequence[ float ],
    total: float,
    true_g_sq: float,
    tr_sigma: float,
    dimension: int,
) -> MomentTable:
    ''' Exact moments for isotropic Gaussian per-sample gradients.

        Per-coordinate variance is covariance trace over dimension. Local
        gradients are independent; each local squared norm covaries with
        the global one exactly as much as the global one varies.
    '''
    b = __.np.asarray( local_batches, dtype = __.np.float64 )
    _validate_batches( 'exact moments', b, total )
    variance = tr_sigma / dimension

    def norm_variance( size: __.typx.Any ) -> __.typx.Any:
        return (
            4 * true_g_sq * variance / size
            + 2 * dimension * variance * variance / ( size * size ) )

    v_global = float( norm_variance( total ) )
    v_local = norm_variance( b )
    rest = total - b
    g_matrix = v_global * total * (
        total - b[ :, None ] - b[ None, : ] ) / __.np.outer( rest, rest )
    __.np.fill_diagonal(
        g_matrix,
        ( total * total * v_global + b * b * v_local
          - 2 * total * b * v_global ) / ( rest * rest ) )
    factors = b * total / rest
    s_matrix = -v_global * __.np.outer( factors, factors )
    __.np.fill_diagonal( s_matrix, factors * factors * ( v_local - v_global ) )
    return MomentTable(
        g_covariance = _render_matrix( g_matrix ),
        s_covariance = _render_matrix( s_matrix ),
        global_sq_variance = v_global,
        local_sq_variances = tuple( float( v ) for v in v_local ),
        global_local_covariances = ( v_global, ) * b.size )


class EstimatorSurvey( __.immut.DataclassObject ):
    ''' Monte-Carlo comparison of estimators against their moments. '''

    local_batches: __.typx.Annotated[
        tuple[ float, ... ], __.ddoc.Doc( 'Local batch per node.' ) ]
    trials: __.typx.Annotated[
        int, __.ddoc.Doc( 'Number of independent draws.' ) ]
    g_means: __.typx.Annotated[
        tuple[ float, ... ],
        __.ddoc.Doc( 'Empirical mean of each norm estimate.' ) ]
    s_means: __.typx.Annotated[
        tuple[ float, ... ],
        __.ddoc.Doc( 'Empirical mean of each trace estimate.' ) ]
    empirical: __.typx.Annotated[
        MomentTable, __.ddoc.Doc( 'Empirical second moments.' ) ]
    predicted: __.typx.Annotated[
        MomentTable, __.ddoc.Doc( 'First-order closed forms.' ) ]
    exact: __.typx.Annotated[
        MomentTable, __.ddoc.Doc( 'Exact Gaussian moments.' ) ]
    weighted_g_variance: __.typx.Annotated[
        float, __.ddoc.Doc( 'Variance of weighted norm estimate.' ) ]
    uniform_g_variance: __.typx.Annotated[
        float, __.ddoc.Doc( 'Variance of averaged norm estimates.' ) ]
    weighted_s_variance: __.typx.Annotated[
        float, __.ddoc.Doc( 'Variance of weighted trace estimate.' ) ]
    uniform_s_variance: __.typx.Annotated[
        float, __.ddoc.Doc( 'Variance of averaged trace estimates.' ) ]

    @property
    def g_variance_ratio( self ) -> float:
        ''' Weighted over uniform variance of norm estimate. '''
        return _divide( self.weighted_g_variance, self.uniform_g_variance )

    @property
    def s_variance_ratio( self ) -> float:
        ''' Weighted over uniform variance of trace estimate. '''
        return _divide( self.weighted_s_variance, self.uniform_s_variance )


def survey_estimators(
    local_sq_norms: __.npt.ArrayLike,
    global_sq_norms: __.npt.ArrayLike,
    local_batches: __.cabc.Sequence[ float ],
    true_g_sq: float,
    tr_sigma: float,
    dimension: int,
) -> EstimatorSurvey:
    ''' Summarizes local and aggregated estimators over many draws. '''
    g_est, s_est = tabulate_local_estimates(
        local_sq_norms, global_sq_norms, local_batches )
    trials = g_est.shape[ 0 ]
    if trials < 1:
        raise _exceptions.EstimatorInvalidity(
            'estimator survey', 'need at least one draw' )
    ddof = 1 if trials > 1 else 0
    local = __.np.asarray( local_sq_norms, dtype = __.np.float64 )
    global_ = __.np.asarray( global_sq_norms, dtype = __.np.float64 )
    total = float( sum( local_batches ) )
    g_matrix, s_matrix = weight_matrices( local_batches, total )
    weights_g = __.np.array(
        optimal_weights( g_matrix, local_batches ).weights )
    weights_s = __.np.array(
        optimal_weights( s_matrix, local_batches ).weights )
    global_variance = float( global_.var( ddof = ddof ) )
    weighted_g = g_est @ weights_g
    weighted_s = s_est @ weights_s
    uniform_g = g_est.mean( axis = 1 )
    uniform_s = s_est.mean( axis = 1 )
    empirical = MomentTable(
        g_covariance = _render_matrix( _covary( g_est, ddof ) ),
        s_covariance = _render_matrix( _covary( s_est, ddof ) ),
        global_sq_variance = global_variance,
        local_sq_variances = tuple(
            float( v ) for v in local.var( axis = 0, ddof = ddof ) ),
        global_local_covariances = tuple(
            float( _covary(
                __.np.column_stack( ( global_, column ) ), ddof )[ 0, 1 ] )
            for column in local.T ) )
    return EstimatorSurvey(
        local_batches = tuple( float( b ) for b in local_batches ),
        trials = trials,
        g_means = tuple( float( v ) for v in g_est.mean( axis = 0 ) ),
        s_means = tuple( float( v ) for v in s_est.mean( axis = 0 ) ),
        empirical = empirical,
        predicted = predicted_moments(
            local_batches, total, true_g_sq, tr_sigma ),
        exact = exact_moments(
            local_batches, total, true_g_sq, tr_sigma, dimension ),
        weighted_g_variance = float( weighted_g.var( ddof = ddof ) ),
        uniform_g_variance = float( uniform_g.var( ddof = ddof ) ),
        weighted_s_variance = float( weighted_s.var( ddof = ddof ) ),
        uniform_s_variance = float( uniform_s.var( ddof = ddof ) ) )


def _covary( columns: __.FloatArray, ddof: int ) -> __.FloatArray:
    centered = columns - columns.mean( axis = 0 )
    return ( centered.T @ centered ) / max( columns.shape[ 0 ] - ddof, 1 )


def _divide( numerator: float, denominator: float ) -> float:
    if denominator == 0: return 1.0 if numerator == 0 else __.math.inf
    return numerator / denominator


def _render_matrix(
    matrix: __.FloatArray
) -> tuple[ tuple[ float, ... ], ... ]:
    return tuple( tuple( float( v ) for v in row ) for row in matrix )


def _validate_batches(
    estimator: str, batches: __.npt.ArrayLike, total: float
) -> None:
    values = __.np.asarray( batches, dtype = __.np.float64 )
    inside = ( values > 0 ) & ( values < total )
    if values.size == 0 or not __.np.all( inside ):
        raise _exceptions.EstimatorInvalidity(
            estimator,
            f'local batches must lie strictly between 0 and {total}, '
            f'got {tuple( values.tolist( ) )}' )
