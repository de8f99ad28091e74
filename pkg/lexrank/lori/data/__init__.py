""" Packaged resources of lexrank.lori """
