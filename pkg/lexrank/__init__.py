""" lexrank init configuration """
