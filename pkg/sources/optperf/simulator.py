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



''' Ground-truth world for noisy telemetry and synthetic gradients.

    Random streams derive from one seed with a spawn key per purpose and
    node, so adding nodes leaves the streams of existing nodes intact.
'''


from . import __
from . import exceptions as _exceptions
from . import learner as _learner
from . import models as _models


_scribe = __.logging.getLogger( __name__ )

_STREAM_TIMING = 0
_STREAM_GAMMA = 1
_STREAM_GRADIENT = 2
_STREAM_COMM = 3
_STREAM_TRIALS = 4

_TRIALS_CHUNK = 10_000


class GradientTruth( __.immut.DataclassObject ):
    ''' True gradient moments of synthetic per-sample gradients. '''

    dimension: __.typx.Annotated[
        int, __.ddoc.Doc( 'Length of gradient vectors.' ) ] = 256
    true_g_sq: __.typx.Annotated[
        float, __.ddoc.Doc( 'Squared norm of true gradient.' ) ] = 1.0
    tr_sigma: __.typx.Annotated[
        float,
        __.ddoc.Doc( 'Trace of per-sample gradient covariance.' ) ] = 100.0
    tr_sigma_decay: __.typx.Annotated[
        float,
        __.ddoc.Doc( 'Factor applied to covariance trace per epoch.' )
    ] = 1.0

    def __post_init__( self ) -> None:
        if self.dimension < 1:
            raise _exceptions.DomainInvalidity(
                'dimension', f'must be positive, got {self.dimension}' )
        for name in ( 'true_g_sq', 'tr_sigma' ):
            value = getattr( self, name )
            if not value >= 0:
                raise _exceptions.DomainInvalidity(
                    name, f'must be non-negative, got {value!r}' )
        if not self.tr_sigma_decay > 0:
            raise _exceptions.DomainInvalidity(
                'tr_sigma_decay',
                f'must be positive, got {self.tr_sigma_decay!r}' )

    def produce_tr_sigma( self, epoch: int = 0 ) -> float:
        ''' Covariance trace in given epoch. '''
        return self.tr_sigma * self.tr_sigma_decay ** epoch

    def produce_mean( self ) -> __.FloatArray:
        ''' True gradient vector, spread evenly over coordinates. '''
        return __.np.full(
            self.dimension, __.math.sqrt( self.true_g_sq / self.dimension ) )


class TruthWorld( __.immut.DataclassObject ):
    ''' Hidden cluster parameters and noise levels of a simulation. '''

    true_spec: __.typx.Annotated[
        _models.ClusterSpec,
        __.ddoc.Doc( 'True cluster, hidden from the learner.' ) ]
    noise_cv: __.typx.Annotated[
        float,
        __.ddoc.Doc(
            'Coefficient of variation of multiplicative timing noise.' )
    ] = 0.05
    gamma_noise_cvs: __.typx.Annotated[
        __.Absential[ tuple[ float, ... ] ],
        __.ddoc.Doc(
            'Per-node coefficient of variation of overlap ratio '
            'measurements. Timing noise level when absent.' ) ] = __.absent
    n_buckets: __.typx.Annotated[
        int, __.ddoc.Doc( 'Number of gradient buckets.' ) ] = 8
    gradients: __.typx.Annotated[
        GradientTruth,
        __.ddoc.Doc( 'True moments of synthetic gradients.' )
    ] = __.dcls.field( default_factory = GradientTruth )
    seed: __.typx.Annotated[
        int, __.ddoc.Doc( 'Seed of all random streams.' ) ] = 0

    def __post_init__( self ) -> None:
        if not self.noise_cv >= 0:
            raise _exceptions.DomainInvalidity(
                'noise_cv', f'must be non-negative, got {self.noise_cv!r}' )
        if self.n_buckets < 2:
            raise _exceptions.DomainInvalidity(
                'n_buckets', f'must be at least 2, got {self.n_buckets}' )
        if self.seed < 0:
            raise _exceptions.DomainInvalidity(
                'seed', f'must be non-negative, got {self.seed}' )
        if __.is_absent( self.gamma_noise_cvs ): return
        if len( self.gamma_noise_cvs ) != self.true_spec.size:
            raise _exceptions.AllocationMismatch(
                self.true_spec.size, len( self.gamma_noise_cvs ) )
        if any( not cv >= 0 for cv in self.gamma_noise_cvs ):
            raise _exceptions.DomainInvalidity(
                'gamma_noise_cvs',
                f'must be non-negative, got {self.gamma_noise_cvs}' )

    def produce_gamma_cvs( self ) -> tuple[ float, ... ]:
        ''' Overlap ratio noise level per node. '''
        if __.is_absent( self.gamma_noise_cvs ):
            return ( self.noise_cv, ) * self.true_spec.size
        return self.gamma_noise_cvs


class BucketEvent( __.immut.DataclassObject ):
    ''' Synchronization of one gradient bucket. '''

    bucket: __.typx.Annotated[ int, __.ddoc.Doc( 'Bucket index.' ) ]
    ready_times: __.typx.Annotated[
        tuple[ float, ... ],
        __.ddoc.Doc( 'Time each node had the bucket computed.' ) ]
    sync_start: __.typx.Annotated[
        float, __.ddoc.Doc( 'Start of synchronization.' ) ]
    sync_end: __.typx.Annotated[
        float, __.ddoc.Doc( 'End of synchronization.' ) ]


class BatchTrace( __.immut.DataclassObject ):
    ''' Outcome of one simulated batch. '''

    observations: __.typx.Annotated[
        tuple[ _learner.TimingObservation, ... ],
        __.ddoc.Doc( 'Telemetry reported by each node.' ) ]
    batch_time: __.typx.Annotated[
        float, __.ddoc.Doc( 'Realized cluster batch time.' ) ]
    events: __.typx.Annotated[
        tuple[ BucketEvent, ... ],
        __.ddoc.Doc( 'Bucket synchronization events in order.' ) ]


class GradientSample( __.immut.DataclassObject ):
    ''' Squared norms of one draw of local and global gradients. '''

    node_ids: __.typx.Annotated[
        tuple[ int, ... ],
        __.ddoc.Doc( 'Nodes holding at least one sample.' ) ]
    local_batches: __.typx.Annotated[
        tuple[ int, ... ], __.ddoc.Doc( 'Local batch per listed node.' ) ]
    local_sq_norms: __.typx.Annotated[
        tuple[ float, ... ],
        __.ddoc.Doc( 'Squared norm of local gradient per listed node.' ) ]
    global_sq_norm: __.typx.Annotated[
        float, __.ddoc.Doc( 'Squared norm of aggregated gradient.' ) ]


def simulate_pipeline(
    a_times: __.cabc.Sequence[ float ],
    p_times: __.cabc.Sequence[ float ],
    gamma: float,
    t_o: float,
    t_u: float,
    n_buckets: int,
) -> float:
    ''' Runs bucket synchronization pipeline; returns batch end time. '''
    end, _ = _run_pipeline( a_times, p_times, gamma, t_o, t_u, n_buckets )
    return end


def _run_pipeline(
    a_times: __.cabc.Sequence[ float ],
    p_times: __.cabc.Sequence[ float ],
    gamma: float,
    t_o: float,
    t_u: float,
    n_buckets: int,
) -> tuple[ float, tuple[ BucketEvent, ... ] ]:
    ''' Event-driven ring synchronization of evenly sized buckets.

        The first bucket is ready once a fraction gamma of backpropagation
        has elapsed; the rest become ready evenly over the remainder. A
        bucket synchronizes when every node has it and the previous
        bucket is done.
    '''
    if n_buckets < 2:
        raise _exceptions.DomainInvalidity(
            'n_buckets', f'must be at least 2, got {n_buckets}' )
    a = __.np.asarray( a_times, dtype = __.np.float64 )
    p = __.np.asarray( p_times, dtype = __.np.float64 )
    first_ready = a + gamma * p
    spacing = ( 1 - gamma ) * p / ( n_buckets - 1 )
    overlap_share = t_o / ( n_buckets - 1 )
    events: list[ BucketEvent ] = [ ]
    previous_end = 0.0
    for bucket in range( n_buckets ):
        if bucket == n_buckets - 1: ready = a + p
        else: ready = first_ready + bucket * spacing
        start = max( float( ready.max( ) ), previous_end )
        duration = t_u if bucket == n_buckets - 1 else overlap_share
        previous_end = start + duration
        events.append( BucketEvent(
            bucket = bucket,
            ready_times = tuple( float( t ) for t in ready ),
            sync_start = start,
            sync_end = previous_end ) )
    return previous_end, tuple( events )


def produce_lognormal_parameters( cv: float ) -> tuple[ float, float ]:
    ''' Log-space mean and deviation of unit-mean lognormal noise. '''
    sigma = __.math.sqrt( __.math.log1p( cv * cv ) )
    return -0.5 * sigma * sigma, sigma


class Simulator:
    ''' Draws telemetry and gradients from a truth world.

        Owns the random streams; one instance per simulation run.
    '''

    def __init__(
        self,
        world: __.typx.Annotated[
            TruthWorld, __.ddoc.Doc( 'World to simulate.' ) ],
    ) -> None:
        self.world = world
        size = world.true_spec.size
        self._timing = tuple(
            self._produce_generator( _STREAM_TIMING, i )
            for i in range( size ) )
        self._gamma = tuple(
            self._produce_generator( _STREAM_GAMMA, i )
            for i in range( size ) )
        self._gradient = tuple(
            self._produce_generator( _STREAM_GRADIENT, i )
            for i in range( size ) )
        self._comm = self._produce_generator( _STREAM_COMM, 0 )
        self._trials = self._produce_generator( _STREAM_TRIALS, 0 )

    def simulate_batch(
        self,
        allocation: _models.Allocation,
        epoch: int = 0,
        batch: int = 0,
    ) -> BatchTrace:
        ''' Simulates one batch under allocation; reports node telemetry.

            Computing and backpropagation times carry independent unit-mean
            lognormal noise per node, synchronization times a shared one.
            Each node reports its overlappable synchronization time
            inflated by how long it waited for the last node to become
            ready, so only that node observes it undelayed.
        '''
        spec = self.world.true_spec
        if len( allocation.local_batches ) != spec.size:
            raise _exceptions.AllocationMismatch(
                spec.size, len( allocation.local_batches ) )
        comm = spec.comm
        mu, sigma = produce_lognormal_parameters( self.world.noise_cv )
        a_times = __.np.empty( spec.size )
        p_times = __.np.empty( spec.size )
        for i, ( node, b ) in enumerate(
            zip( spec.nodes, allocation.local_batches )
        ):
            noise = self._timing[ i ].lognormal( mu, sigma, size = 2 )
            a_times[ i ] = ( node.q * b + node.s ) * noise[ 0 ]
            p_times[ i ] = ( node.k * b + node.m ) * noise[ 1 ]
        comm_noise = self._comm.lognormal( mu, sigma, size = 2 )
        t_o = comm.t_o * float( comm_noise[ 0 ] )
        t_u = comm.t_u * float( comm_noise[ 1 ] )
        batch_time, events = _run_pipeline(
            a_times, p_times, comm.gamma, t_o, t_u, self.world.n_buckets )
        starts = a_times + comm.gamma * p_times
        latest_start = float( starts.max( ) )
        observations: list[ _learner.TimingObservation ] = [ ]
        for i, cv in enumerate( self.world.produce_gamma_cvs( ) ):
            gamma_mu, gamma_sigma = produce_lognormal_parameters( cv )
            gamma_obs = comm.gamma * float(
                self._gamma[ i ].lognormal( gamma_mu, gamma_sigma ) )
            observations.append( _learner.TimingObservation(
                epoch = epoch, batch = batch, node_id = i,
                b = round( allocation.local_batches[ i ] ),
                a_time = float( a_times[ i ] ),
                p_time = float( p_times[ i ] ),
                sync_start_obs = float(
                    a_times[ i ] + gamma_obs * p_times[ i ] ),
                batch_time_obs = batch_time,
                gamma_obs = gamma_obs,
                t_o_obs = t_o + ( latest_start - float( starts[ i ] ) ),
                t_u_obs = t_u ) )
        return BatchTrace(
            observations = tuple( observations ),
            batch_time = batch_time,
            events = events )

    def sample_gradients(
        self, allocation: _models.Allocation, epoch: int = 0
    ) -> GradientSample:
        ''' Draws local gradients as per-node sample means and combines
            them weighted by local batch ratio.

            A node's mean of b i.i.d. Gaussian per-sample gradients is
            itself Gaussian with covariance scaled by 1/b, so it is drawn
            directly. Nodes without samples are left out.
        '''
        truth = self.world.gradients
        scale = __.math.sqrt(
            truth.produce_tr_sigma( epoch ) / truth.dimension )
        mean = truth.produce_mean( )
        node_ids: list[ int ] = [ ]
        batches: list[ int ] = [ ]
        vectors: list[ __.FloatArray ] = [ ]
        for i, b in enumerate( allocation.local_batches ):
            if b < 1: continue
            noise = self._gradient[ i ].standard_normal( truth.dimension )
            node_ids.append( i )
            batches.append( int( b ) )
            vectors.append( mean + ( scale / __.math.sqrt( b ) ) * noise )
        local = __.np.array( vectors )
        ratios = __.np.array( batches, dtype = __.np.float64 ) / sum( batches )
        global_vector = ratios @ local
        return GradientSample(
            node_ids = tuple( node_ids ),
            local_batches = tuple( batches ),
            local_sq_norms = tuple(
                float( v @ v ) for v in local ),
            global_sq_norm = float( global_vector @ global_vector ) )

    def draw_sample_gradients(
        self, allocation: _models.Allocation, epoch: int = 0
    ) -> tuple[ __.FloatArray, ... ]:
        ''' Draws every per-sample gradient; one array per node. '''
        truth = self.world.gradients
        scale = __.math.sqrt(
            truth.produce_tr_sigma( epoch ) / truth.dimension )
        mean = truth.produce_mean( )
        return tuple(
            mean + scale * self._gradient[ i ].standard_normal(
                ( int( b ), truth.dimension ) )
            for i, b in enumerate( allocation.local_batches ) )

    def sample_gradient_trials(
        self,
        local_batches: __.cabc.Sequence[ int ],
        trials: int,
    ) -> tuple[ __.FloatArray, __.FloatArray ]:
        ''' Draws many independent gradient samples at once.

            Returns local squared norms (trials by nodes) and global
            squared norms (trials).
        '''
        truth = self.world.gradients
        batches = __.np.asarray( local_batches, dtype = __.np.float64 )
        if batches.size == 0 or not __.np.all( batches >= 1 ):
            raise _exceptions.DomainInvalidity(
                'local_batches',
                f'must all hold a sample, got {tuple( local_batches )}' )
        ratios = batches / batches.sum( )
        scales = __.np.sqrt( truth.tr_sigma / truth.dimension / batches )
        mean = truth.produce_mean( )
        local_norms = __.np.empty( ( trials, batches.size ) )
        global_norms = __.np.empty( trials )
        for begin in range( 0, trials, _TRIALS_CHUNK ):
            count = min( _TRIALS_CHUNK, trials - begin )
            noise = self._trials.standard_normal(
                ( count, batches.size, truth.dimension ) )
            vectors = mean + scales[ None, :, None ] * noise
            local_norms[ begin : begin + count ] = __.np.einsum(
                'tnd,tnd->tn', vectors, vectors )
            combined = __.np.einsum( 'n,tnd->td', ratios, vectors )
            global_norms[ begin : begin + count ] = __.np.einsum(
                'td,td->t', combined, combined )
        return local_norms, global_norms

    def _produce_generator(
        self, stream: int, node: int
    ) -> __.np.random.Generator:
        sequence = __.np.random.SeedSequence(
            self.world.seed, spawn_key = ( stream, node ) )
        return __.np.random.Generator( __.np.random.Philox( sequence ) )
