class EmptyMeshError(Exception):
    def __init__(self, source):
        self.source = source

    def __str__(self):
        return 'Error while loading the mesh:\n\n{} contains no triangles'.format(self.source)
