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



''' Per-node and cluster batch processing time models.

    A node's computing time is linear in its local batch size: the
    non-backpropagation part (data loading, forward pass, optimizer step)
    has slope ``q`` and intercept ``s``; the backpropagation part has slope
    ``k`` and intercept ``m``. Gradient synchronization of the first bucket
    starts once a fraction ``gamma`` of backpropagation has elapsed. All
    buckets but the last take ``t_o`` to synchronize and may overlap with
    the remaining backpropagation; the last bucket takes ``t_u``.
'''


from . import __
from . import exceptions as _exceptions


class BottleneckLabels( __.enum.Enum ):
    ''' Which activity limits the batch time of a node. '''

    Compute = 'compute'
    Communication = 'communication'


def _validate_finite_nonnegative( name: str, value: float ) -> None:
    if not __.math.isfinite( value ) or value < 0:
        raise _exceptions.DomainInvalidity(
            name, f'must be finite and non-negative, got {value!r}' )


def _validate_batch( b: float ) -> None:
    if not b >= 0:
        raise _exceptions.DomainInvalidity(
            'b', f'batch size must be non-negative, got {b!r}' )


class NodeComputeModel( __.immut.DataclassObject ):
    ''' Linear computing time model of one node. '''

    node_id: __.typx.Annotated[
        int, __.ddoc.Doc( 'Zero-based index of node within cluster.' ) ]
    q: __.typx.Annotated[
        float,
        __.ddoc.Doc( 'Seconds per sample outside backpropagation.' ) ]
    s: __.typx.Annotated[
        float, __.ddoc.Doc( 'Fixed seconds outside backpropagation.' ) ]
    k: __.typx.Annotated[
        float, __.ddoc.Doc( 'Seconds per sample of backpropagation.' ) ]
    m: __.typx.Annotated[
        float, __.ddoc.Doc( 'Fixed seconds of backpropagation.' ) ]

    def __post_init__( self ) -> None:
        if self.node_id < 0:
            raise _exceptions.DomainInvalidity(
                'node_id', f'must be non-negative, got {self.node_id}' )
        for name in ( 'q', 's', 'k', 'm' ):
            _validate_finite_nonnegative( name, getattr( self, name ) )

    @property
    def compute_slope( self ) -> float:
        ''' Seconds of computing time per additional sample. '''
        return self.q + self.k

    @property
    def compute_intercept( self ) -> float:
        ''' Computing time of an empty batch. '''
        return self.s + self.m

    def produce_sync_slope( self, gamma: float ) -> float:
        ''' Seconds of synchronization delay per additional sample. '''
        return self.q + gamma * self.k

    def produce_sync_intercept( self, gamma: float ) -> float:
        ''' Synchronization start of an empty batch. '''
        return self.s + gamma * self.m

    def render_as_json( self ) -> dict[ str, __.typx.Any ]:
        ''' Renders model as JSON-compatible dictionary. '''
        return {
            'node_id': self.node_id,
            'q': self.q, 's': self.s, 'k': self.k, 'm': self.m,
        }


class CommModel( __.immut.DataclassObject ):
    ''' Cluster-wide gradient synchronization model. '''

    gamma: __.typx.Annotated[
        float,
        __.ddoc.Doc(
            'Fraction of backpropagation elapsed before the first '
            'gradient bucket is ready.' ) ]
    t_o: __.typx.Annotated[
        float,
        __.ddoc.Doc( 'Seconds to synchronize all buckets but the last.' ) ]
    t_u: __.typx.Annotated[
        float, __.ddoc.Doc( 'Seconds to synchronize the last bucket.' ) ]

    def __post_init__( self ) -> None:
        if not 0 < self.gamma < 1:
            raise _exceptions.DomainInvalidity(
                'gamma', f'must lie in (0, 1), got {self.gamma!r}' )
        _validate_finite_nonnegative( 't_o', self.t_o )
        _validate_finite_nonnegative( 't_u', self.t_u )

    @property
    def t_comm( self ) -> float:
        ''' Total synchronization time of one batch. '''
        return self.t_o + self.t_u

    def render_as_json( self ) -> dict[ str, __.typx.Any ]:
        ''' Renders model as JSON-compatible dictionary. '''
        return { 'gamma': self.gamma, 't_o': self.t_o, 't_u': self.t_u }


class ClusterSpec( __.immut.DataclassObject ):
    ''' Heterogeneous cluster: node models, synchronization, memory caps. '''

    nodes: __.typx.Annotated[
        tuple[ NodeComputeModel, ... ],
        __.ddoc.Doc( 'Node models ordered by node identifier.' ) ]
    comm: __.typx.Annotated[
        CommModel, __.ddoc.Doc( 'Cluster-wide synchronization model.' ) ]
    caps: __.typx.Annotated[
        __.Absential[ tuple[ float, ... ] ],
        __.ddoc.Doc(
            'Maximum local batch size per node. '
            'Infinite entries leave a node uncapped.' ) ] = __.absent

    def __post_init__( self ) -> None:
        if not self.nodes:
            raise _exceptions.DomainInvalidity(
                'nodes', 'cluster must contain at least one node' )
        identifiers = tuple( node.node_id for node in self.nodes )
        if identifiers != tuple( range( len( self.nodes ) ) ):
            raise _exceptions.DomainInvalidity(
                'nodes',
                f'node identifiers must be 0..n-1, got {identifiers}' )
        if __.is_absent( self.caps ): return
        if len( self.caps ) != len( self.nodes ):
            raise _exceptions.AllocationMismatch(
                len( self.nodes ), len( self.caps ) )
        for cap in self.caps:
            if not cap >= 1:
                raise _exceptions.DomainInvalidity(
                    'max_local_batch', f'must be at least 1, got {cap!r}' )

    @property
    def size( self ) -> int:
        ''' Number of nodes in cluster. '''
        return len( self.nodes )

    def produce_caps( self ) -> __.FloatArray:
        ''' Per-node caps as array; uncapped nodes hold infinity. '''
        if __.is_absent( self.caps ):
            return __.np.full( self.size, __.np.inf )
        return __.np.asarray( self.caps, dtype = __.np.float64 )

    def with_comm( self, comm: CommModel ) -> __.typx.Self:
        ''' Returns copy of cluster with another synchronization model. '''
        return type( self )(
            nodes = self.nodes, comm = comm, caps = self.caps )

    def render_as_json( self ) -> dict[ str, __.typx.Any ]:
        ''' Renders cluster as JSON-compatible dictionary. '''
        result: dict[ str, __.typx.Any ] = {
            'nodes': [ node.render_as_json( ) for node in self.nodes ],
            'comm': self.comm.render_as_json( ),
        }
        if not __.is_absent( self.caps ):
            result[ 'caps' ] = [
                cap if __.math.isfinite( cap ) else None
                for cap in self.caps ]
        return result


class Allocation( __.immut.DataclassObject ):
    ''' Split of a total batch into local batches. '''

    total: __.typx.Annotated[
        int, __.ddoc.Doc( 'Total batch size across all nodes.' ) ]
    local_batches: __.typx.Annotated[
        tuple[ float, ... ],
        __.ddoc.Doc(
            'Local batch size per node. '
            'Real-valued from solvers, integral after rounding.' ) ]

    def __post_init__( self ) -> None:
        if self.total < 1:
            raise _exceptions.DomainInvalidity(
                'total', f'must be positive, got {self.total}' )
        if any( not b >= 0 for b in self.local_batches ):
            raise _exceptions.DomainInvalidity(
                'local_batches',
                f'must be non-negative, got {self.local_batches}' )
        deviation = abs( __.math.fsum( self.local_batches ) - self.total )
        if deviation > 1e-9 * self.total:
            raise _exceptions.DomainInvalidity(
                'local_batches',
                f'sum deviates from total {self.total} by {deviation:.3g}' )

    @property
    def ratios( self ) -> tuple[ float, ... ]:
        ''' Local batch ratios, summing to one. '''
        return tuple( b / self.total for b in self.local_batches )

    @property
    def integral( self ) -> bool:
        ''' Whether every local batch size is a whole number. '''
        return all( float( b ).is_integer( ) for b in self.local_batches )

    def render_as_json( self ) -> dict[ str, __.typx.Any ]:
        ''' Renders allocation as JSON-compatible dictionary. '''
        return {
            'total': self.total,
            'local_batches': list( self.local_batches ),
        }


def compute_time( model: NodeComputeModel, b: float ) -> float:
    ''' Computing time of one batch: non-backprop plus backprop time. '''
    _validate_batch( b )
    return ( model.q * b + model.s ) + ( model.k * b + model.m )


def sync_start( model: NodeComputeModel, comm: CommModel, b: float ) -> float:
    ''' Time at which the first gradient bucket becomes ready. '''
    _validate_batch( b )
    return ( model.q * b + model.s ) + comm.gamma * ( model.k * b + model.m )


def classify_bottleneck(
    model: NodeComputeModel, comm: CommModel, b: float
) -> BottleneckLabels:
    ''' Classifies node as computing or communication bottleneck.

        Remaining backpropagation after the first bucket is ready either
        hides the overlappable synchronization (computing bottleneck,
        boundary included) or does not.
    '''
    _validate_batch( b )
    remaining = ( 1 - comm.gamma ) * ( model.k * b + model.m )
    if remaining >= comm.t_o: return BottleneckLabels.Compute
    return BottleneckLabels.Communication


def node_batch_time(
    model: NodeComputeModel, comm: CommModel, b: float
) -> float:
    ''' Batch processing time of a single node, by its bottleneck. '''
    match classify_bottleneck( model, comm, b ):
        case BottleneckLabels.Compute:
            return compute_time( model, b ) + comm.t_u
        case BottleneckLabels.Communication:
            return sync_start( model, comm, b ) + comm.t_comm


def cluster_batch_time( spec: ClusterSpec, allocation: Allocation ) -> float:
    ''' Batch processing time of synchronous cluster.

        Slowest gradient computation plus last-bucket synchronization, or
        latest synchronization start plus full synchronization, whichever
        is later.
    '''
    if len( allocation.local_batches ) != spec.size:
        raise _exceptions.AllocationMismatch(
            spec.size, len( allocation.local_batches ) )
    comm = spec.comm
    pairs = tuple( zip( spec.nodes, allocation.local_batches ) )
    latest_compute = max( compute_time( node, b ) for node, b in pairs )
    latest_sync = max( sync_start( node, comm, b ) for node, b in pairs )
    return max( latest_compute + comm.t_u, latest_sync + comm.t_comm )


def even_split( total: int, count: int ) -> Allocation:
    ''' Real-valued equal split of total batch across nodes. '''
    return Allocation(
        total = total, local_batches = ( total / count, ) * count )


def format_real( value: __.Absential[ float ] ) -> str:
    ''' Formats real number with nine significant digits. '''
    if __.is_absent( value ): return ''
    return format( value, '.9g' )


def round_reals( value: __.typx.Any ) -> __.typx.Any:
    ''' Rounds reals nested in JSON-compatible value like format_real. '''
    if isinstance( value, float ): return float( format_real( value ) )
    if isinstance( value, dict ):
        entries = __.typx.cast( dict[ str, __.typx.Any ], value )
        return { key: round_reals( item ) for key, item in entries.items( ) }
    if isinstance( value, list ):
        items = __.typx.cast( list[ __.typx.Any ], value )
        return [ round_reals( item ) for item in items ]
    return value
